pub mod error;
pub mod factorization;
pub mod grouping;
pub mod inr;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod observed;
pub mod oracles;
pub mod regularizers;
pub mod seeds;
pub mod synthetic;
pub mod tasks;
pub mod tensor;

pub use error::{CrnlError, Result};
pub use factorization::{CrnlModel, ModelLayout, TrainConfig};
pub use grouping::{CubeGrid, GroupIndex, GroupObservedSet};
pub use inr::{FitConfig, FittedInr};
pub use neural::{AdamConfig, AdamState, SineMlp};
pub use observed::{GridMeta, ObservedSet};
pub use tensor::{DenseTensor, TuckerRank};
pub use metrics::{ImageMetrics, MetricReport, RegressionMetrics};
pub use oracles::{run_oracles, OracleReport};
pub use tasks::{run_task, RunConfig, Task};
