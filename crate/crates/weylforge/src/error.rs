use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids differ")]
    GridMismatch,
    #[error("malformed binary payload: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("annulus outer radius {outer} does not fit in half side {half}")]
    AnnulusTooLarge { outer: f64, half: f64 },
    #[error("mollifier scale {scale} exceeds resolvable {limit}")]
    ScaleUnresolvable { scale: f64, limit: f64 },
    #[error("shift length {0} cannot be resolved")]
    DeltaUnresolvable(f64),
    #[error("angular margin {margin} too wide for gap {gap}")]
    MarginTooWide { margin: f64, gap: f64 },
    #[error("index sets U_{a} and U_{b} overlap at {n:?}")]
    CellOverlap { a: usize, b: usize, n: (i64, i64) },
    #[error("shift leaves frequency {0:?} outside the positive quadrant")]
    ShiftTooSmall((i64, i64)),
    #[error("{p} and {q} are not coprime")]
    NotCoprime { p: i64, q: i64 },
    #[error("index {index} outside 1..={limit}")]
    IndexOutOfRange { index: i64, limit: i64 },
    #[error("spectrum exceeds {0}")]
    SpectrumOverflow(String),
    #[error("families {0} and {1} share a frequency")]
    OrthogonalityViolation(usize, usize),
    #[error("{samples} samples below 8N = {needed}")]
    ResolutionTooLow { samples: usize, needed: usize },
    #[error("frequency {0} outside 1..=N")]
    SupportViolation(i64),
    #[error("{l} blocks of {m} exceed {n}")]
    BlockOverflow { l: usize, m: usize, n: usize },
    #[error("exceedance set is empty")]
    EmptyExceedanceSet,
    #[error("no admissible N_k for stage {0}")]
    MultiplierNotSmallO(usize),
    #[error("interval length {len} below {min}")]
    IntervalTooSmall { len: f64, min: f64 },
    #[error("carrier {carrier} below {needed}")]
    CarrierTooSmall { carrier: i64, needed: i64 },
    #[error("horizon {0} certifies neither branch")]
    HorizonTooShort(usize),
    #[error("level {level}: {found} qualifying subintervals, {needed} required")]
    DensityUnreachable { level: usize, found: usize, needed: usize },
    #[error("inconsistent levels: {0}")]
    InconsistentLevels(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
