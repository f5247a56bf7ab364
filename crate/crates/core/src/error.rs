use thiserror::Error;

use crate::index_space::{IndexBox, IndexType, IntVect};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index type mismatch: {0} vs {1}")]
    IndexTypeMismatch(IndexType, IndexType),
    #[error("invalid refinement ratio {0}")]
    InvalidRatio(i32),
    #[error("operation requires a cell-centered box, got {0}")]
    NotCellCentered(IndexBox),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("cannot allocate a fab over an empty box")]
    EmptyBox,
    #[error("ncomp must be at least 1")]
    ZeroComponents,
    #[error("region {region} is not contained in {container}")]
    RegionOutside { region: IndexBox, container: IndexBox },
    #[error("component range {start}..{end} out of bounds for {ncomp} components")]
    ComponentRange { start: usize, end: usize, ncomp: usize },
    #[error("box array and distribution mapping lengths differ ({0} vs {1})")]
    LayoutMismatch(usize, usize),
    #[error("box array is empty")]
    EmptyBoxArray,
    #[error("boxes {0} and {1} overlap")]
    OverlappingBoxes(usize, usize),
    #[error("rank {rank} out of range for {nranks} ranks")]
    RankOutOfRange { rank: usize, nranks: usize },
    #[error("fab {0} is not owned by this rank")]
    NotLocal(usize),
    #[error("tile size must be positive, got {0}")]
    InvalidTileSize(IntVect),

    #[error("arena allocation of {0} bytes failed")]
    AllocFailed(usize),
    #[error("alignment {0} is not a supported power of two")]
    BadAlignment(usize),
    #[error("block at {0:#x} is not an outstanding allocation of this arena")]
    InvalidFree(usize),

    #[error("option value {value} is not a member of option set {set}")]
    InvalidOption { set: usize, value: i32 },
    #[error("expected {expected} kernel variants, got {got}")]
    VariantCount { expected: usize, got: usize },

    #[error("rank {rank} panicked: {message}")]
    RankPanicked { rank: usize, message: String },
    #[error("communication requires cell or fully nodal data, got {0}")]
    UnsupportedIndexType(IndexType),
    #[error("ghost width {ngrow} exceeds the smallest box extent {extent}")]
    GhostTooWide { ngrow: IntVect, extent: IntVect },
    #[error("reduction op lists differ across ranks")]
    MismatchedOps,
    #[error("mapped cell {0} is not covered by the source")]
    MappingOutOfBounds(IntVect),
    #[error("box array must have pairwise disjoint boxes for this operation")]
    NotDisjoint,

    #[error("particle id field overflow: rank {rank}, local id {local}")]
    IdOverflow { rank: u64, local: u64 },
    #[error("unknown particle component `{0}`")]
    UnknownComponent(String),
    #[error("particle component `{0}` is already registered")]
    DuplicateComponent(String),
    #[error("component `{name}` has {got} values for {expected} particles")]
    ComponentLength { name: String, expected: usize, got: usize },
    #[error("particle position {0:?} lies outside the non-periodic domain")]
    ParticleOutside([f64; 3]),
    #[error("level {0} does not exist")]
    NoSuchLevel(usize),

    #[error("tagged cell {0} lies outside the level domain")]
    TagOutside(IntVect),
    #[error("coarse data does not cover {0}")]
    InsufficientCoarseData(IndexBox),
    #[error("fine box {0} is not aligned to refinement ratio {1}")]
    Misaligned(IndexBox, i32),
    #[error("invalid AMR configuration: {0}")]
    InvalidAmr(String),

    #[error("inputs line {line}: {message}")]
    InputsSyntax { line: usize, message: String },
    #[error("inputs key `{key}`: {message}")]
    InputsValue { key: String, message: String },
    #[error("plotfile: {0}")]
    Plotfile(String),
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("demo setup: {0}")]
    Demo(String),
    #[error("benchmark cross-check failed: {0}")]
    CrossCheck(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
