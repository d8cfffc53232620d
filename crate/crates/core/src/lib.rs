//! Resampling-based control of the false discovery exceedance (FDX) with
//! simultaneous multi-resolution bounds.
//!
//! Given a matrix of resampled test statistics (row 0 observed), the
//! procedures find a threshold `q` such that, with probability at least
//! `1 - alpha`, every rejection set `{i : T_i > t}` with `t >= q` has false
//! discovery proportion at most `gamma`. With `gamma = 0` they reduce to
//! the resampling maxT procedure.
//!
//! ```
//! use fdx::{single_step, AnalysisConfig, StatMatrix};
//!
//! let x = [1.0, 2.0, 3.0, 4.0, -5.0, 6.0];
//! let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
//! let stats = StatMatrix::from_rows(vec![x.to_vec(), flipped]).unwrap();
//! let cfg = AnalysisConfig::new(0.5, 0.5).unwrap();
//! let res = single_step(&stats, &cfg).unwrap();
//! assert_eq!(res.rejections.indices, vec![5]);
//! ```

pub mod cli;
pub mod common;
pub mod error;
pub mod fdx_seq;
pub mod fdx_single;
pub mod maxt;
pub mod oracle;
pub mod report;
pub mod resampling;
pub mod rng;
pub mod selftest;
pub mod simlab;
pub mod stats;

pub use common::{AnalysisConfig, Direction, RejectionSet, StatMatrix};
pub use error::{Error, Result};
pub use fdx_seq::{sequential_approx, sequential_exact, SeqMode, SequentialResult};
pub use fdx_single::{s_g_grid, single_step, single_step_pvalues, SingleStepResult};
pub use maxt::{coincidence_check, maxt_sequential, maxt_single, MaxTResult, Verdict};
pub use report::{render_report, zoom_table, Report, ZoomTable};
pub use resampling::{build_stat_matrix, draw_transforms, Dataset, Design, Engine, ResamplePlan, Transform};
pub use simlab::{gen_two_group, run_study, Method, SimDesign, SimOutcome};
pub use stats::StatisticPlugin;
