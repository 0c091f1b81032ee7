//! Quantitative analyses over the canonical relations: activity series,
//! fee analysis with statistical tests, oracle-risk dynamics, outcome
//! calibration, and implied-distribution reconstruction. Everything here
//! is a pure function over store snapshots or plain slices.

pub mod activity;
pub mod calibration;
pub mod cpi;
pub mod fees;
pub mod isotonic;
pub mod normal;
pub mod oracle_risk;
pub mod pricing;
pub mod stats;

pub use activity::{
    daily_activity, default_topic_priority, primary_topic, rolling_volume_by_topic, DayActivity,
    NormalizedDayActivity, TopicVolumeRow,
};
pub use calibration::{
    build_calibration_dataset, calibration_metrics, default_nba_lexicon, match_single_game_winner,
    season_of, split_by_season, CalibrationMetrics, CalibrationSample, GameOutcome,
    MarketGameData, ReliabilityBin, TeamLexicon,
};
pub use cpi::{
    bucket_mass, build_bucket_partition, cpi_event_prob, cpi_token_snapshot,
    fit_gaussian_to_buckets, implied_cpi_path, parse_bucket_label, BucketLabelKind, BucketSeries,
    BucketSpec, CpiTrade, FitError, FitOptions, GaussianFit, ImpliedPathPoint, OutcomeSide,
    MIN_TOKEN_PROB, SNAPSHOT_WINDOW_HOURS,
};
pub use fees::{
    effective_fee_rates, fee_summary_by_category, CategoryFeeSummary, FeeRateRow,
};
pub use isotonic::{IsotonicError, IsotonicFit};
pub use normal::{erf, erfc, normal_cdf};
pub use oracle_risk::{
    continued_betting, oracle_risk_anchor, post_anchor_histogram, AnchorKind, PostAnchorStats,
    RiskAnchor, CONTINUED_BETTING_WINDOW_HOURS,
};
pub use pricing::{clean_fills_for_pricing, size_weighted_prob, PricedTrade, PricingError};
pub use stats::{anova_oneway, beta_reg, kruskal_wallis, pearson_r, AnovaResult, StatsError};
