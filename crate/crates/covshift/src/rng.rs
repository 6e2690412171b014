//! Seed-derived RNG streams.
//!
//! Every source of auxiliary randomness owns a dedicated ChaCha stream of the
//! run seed, so adding a fit or reordering steps never perturbs the draws of
//! another step. The zeta tiebreakers are indexed per minibatch for the same
//! reason.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    /// Sample splitting into I11/I12/I21/I22 and the ranking batches.
    Split,
    /// Classifier fit for the marginal ratio g.
    MarginalFit,
    /// Classifier fit for the joint ratio.
    JointFit,
    /// Covariate/noise draws for the training population.
    GenerateTrain,
    /// Covariate/noise draws for the testing population.
    GenerateTest,
    /// Resampling draws (exponential tilting).
    Resample,
    /// The U(0,1) tiebreaker of the k-th minibatch.
    Zeta(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 0,
            Stream::MarginalFit => 1,
            Stream::JointFit => 2,
            Stream::GenerateTrain => 3,
            Stream::GenerateTest => 4,
            Stream::Resample => 5,
            Stream::Zeta(k) => (1 << 32) + k,
        }
    }
}

/// ChaCha generator on the given stream of `seed`.
pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
