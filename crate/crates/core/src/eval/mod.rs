//! Rank correlation, key-fragment F1 and the dataset-level harness.

pub mod correlation;
pub mod knapsack;
pub mod metrics;
pub mod report;

pub use correlation::{average_ranks, kendall_tau_b, pearson, spearman_rho};
pub use knapsack::{knapsack_select, FragmentSelection};
pub use metrics::{evaluate_curve, f1_keyfragment, F1Aggregation, RankAggregation, RankScores};
pub use report::{
    cross_matrix, evaluate_dataset, evaluate_splits, evaluate_videos, write_json, write_video_rows, CrossMatrix,
    DatasetReport, EvalDataset, EvalOptions, SplitReport, VideoMetrics,
};
