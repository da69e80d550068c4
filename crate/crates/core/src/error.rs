use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible series bases (p = {0} vs p = {1})")]
    IncompatibleBases(f64, f64),

    #[error("resonant exponent: target t^{exponent} is the indicial root; request the log branch")]
    ResonantExponent { exponent: f64 },

    #[error("near-resonant exponent t^{exponent}: |indicial factor| = {factor:.3e} < 1e-6")]
    NearResonant { exponent: f64, factor: f64 },

    #[error("ansatz iteration did not terminate after {0} corrections")]
    AnsatzDiverged(usize),

    #[error("trajectory left the blow-up basin: phi = {phi:.3e} at t = {t:.6e}")]
    LeftBasin { t: f64, phi: f64 },

    #[error("integrator step underflow at t = {0:.6e}")]
    StepUnderflow(f64),

    #[error("gauge-law violation: relative spread of Ω̊²τ^{{−2κ}} = {spread:.3e} exceeds 1%")]
    GaugeLawViolation { spread: f64 },

    #[error("non-finite value encountered during {0}")]
    NonFinite(&'static str),

    #[error("blow-up cap reached at t = {0:.6e} before the requested target")]
    BlowupReached(f64),

    #[error("blow-up not reached within the step budget (max |phi| = {0:.3e})")]
    BlowupNotReached(f64),

    #[error("too few slices for {op}: have {have}, need {need}")]
    TooFewSlices {
        op: &'static str,
        have: usize,
        need: usize,
    },

    #[error("level set τ = {0:.6e} exits the sampled time range")]
    LevelSetOutOfRange(f64),

    #[error("surface fit unreliable: extrapolation distance {dist:.3e} exceeds window {window:.3e}")]
    ExtrapolationTooFar { dist: f64, window: f64 },

    #[error("scattering fit misfit: post-fit residual decays like 𝐭^{measured:.2} ≤ 𝐭^{expected:.2}")]
    FitMisfit { measured: f64, expected: f64 },

    #[error("mismatched grids ({0} vs {1} points)")]
    MismatchedGrids(usize, usize),

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
