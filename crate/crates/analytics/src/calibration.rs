//! Outcome-calibration pipeline for single-game winner markets: the
//! rule-based team matcher, team-level sample construction with a
//! season split, and the calibration metrics (Brier, LogLoss, ECE, MCE)
//! with their reliability-bin table.

use chrono::{DateTime, Datelike, Utc};
use polyflow_core::Hash32;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{size_weighted_prob, PricedTrade, PricingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("predictions and labels must have equal nonzero length")]
    BadInput,
    #[error("prediction {0} outside [0,1]")]
    BadProbability(f64),
    #[error("label {0} is not 0 or 1")]
    BadLabel(f64),
}

// ---------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetrics {
    pub brier: f64,
    pub log_loss: f64,
    pub ece: f64,
    pub mce: f64,
    pub n: u64,
    pub bins: Vec<ReliabilityBin>,
}

/// Brier, LogLoss (probabilities clipped to [1e-15, 1-1e-15]), and the
/// equal-width-bin calibration errors. MCE is taken over non-empty bins.
pub fn calibration_metrics(
    p: &[f64],
    y: &[f64],
    n_bins: usize,
) -> Result<CalibrationMetrics, CalibrationError> {
    if p.is_empty() || p.len() != y.len() || n_bins == 0 {
        return Err(CalibrationError::BadInput);
    }
    for &pi in p {
        if !(0.0..=1.0).contains(&pi) {
            return Err(CalibrationError::BadProbability(pi));
        }
    }
    for &yi in y {
        if yi != 0.0 && yi != 1.0 {
            return Err(CalibrationError::BadLabel(yi));
        }
    }
    let n = p.len() as f64;
    const EPS: f64 = 1e-15;

    let mut brier = 0.0;
    let mut log_loss = 0.0;
    let mut conf_sum = vec![0.0f64; n_bins];
    let mut acc_sum = vec![0.0f64; n_bins];
    let mut counts = vec![0u64; n_bins];
    for (&pi, &yi) in p.iter().zip(y) {
        brier += (pi - yi) * (pi - yi);
        let clipped = pi.clamp(EPS, 1.0 - EPS);
        log_loss -= yi * clipped.ln() + (1.0 - yi) * (1.0 - clipped).ln();
        let bin = ((pi * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf_sum[bin] += pi;
        acc_sum[bin] += yi;
        counts[bin] += 1;
    }
    brier /= n;
    log_loss /= n;

    let mut ece = 0.0;
    let mut mce = 0.0f64;
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let lower = b as f64 / n_bins as f64;
        let upper = (b + 1) as f64 / n_bins as f64;
        if counts[b] > 0 {
            let conf = conf_sum[b] / counts[b] as f64;
            let acc = acc_sum[b] / counts[b] as f64;
            let gap = (acc - conf).abs();
            ece += counts[b] as f64 / n * gap;
            mce = mce.max(gap);
            bins.push(ReliabilityBin {
                lower,
                upper,
                count: counts[b],
                mean_confidence: Some(conf),
                mean_accuracy: Some(acc),
            });
        } else {
            bins.push(ReliabilityBin {
                lower,
                upper,
                count: 0,
                mean_confidence: None,
                mean_accuracy: None,
            });
        }
    }

    Ok(CalibrationMetrics {
        brier,
        log_loss,
        ece,
        mce,
        n: p.len() as u64,
        bins,
    })
}

// ---------------------------------------------------------------------
// team matcher
// ---------------------------------------------------------------------

/// Configurable team dictionary for the winner-market matcher. Matching
/// is case-insensitive on full team names.
#[derive(Debug, Clone)]
pub struct TeamLexicon {
    names: Vec<String>,
}

impl TeamLexicon {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        let mut names: Vec<String> = names.into_iter().map(|n| n.to_lowercase()).collect();
        // longest-first so "Los Angeles Lakers" wins over any prefix
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        Self { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

pub fn default_nba_lexicon() -> TeamLexicon {
    TeamLexicon::new(
        [
            "Atlanta Hawks", "Boston Celtics", "Brooklyn Nets", "Charlotte Hornets",
            "Chicago Bulls", "Cleveland Cavaliers", "Dallas Mavericks", "Denver Nuggets",
            "Detroit Pistons", "Golden State Warriors", "Houston Rockets", "Indiana Pacers",
            "Los Angeles Clippers", "Los Angeles Lakers", "Memphis Grizzlies", "Miami Heat",
            "Milwaukee Bucks", "Minnesota Timberwolves", "New Orleans Pelicans",
            "New York Knicks", "Oklahoma City Thunder", "Orlando Magic", "Philadelphia 76ers",
            "Phoenix Suns", "Portland Trail Blazers", "Sacramento Kings", "San Antonio Spurs",
            "Toronto Raptors", "Utah Jazz", "Washington Wizards",
        ]
        .into_iter()
        .map(String::from),
    )
}

/// Question shapes excluded from the winner dataset: spreads, totals,
/// player props, partial-game markets.
const EXCLUDED_PATTERNS: [&str; 10] = [
    "spread", "total", "o/u", "over/under", "points", "mvp", "prop", "quarter", "half",
    " by ",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGame {
    pub team_a: String,
    pub team_b: String,
}

/// Rule-based single-game winner matcher. A question qualifies only if
/// exactly two known teams appear, a winner verb is present, and no
/// excluded pattern matches; anything ambiguous is excluded, never
/// guessed.
pub fn match_single_game_winner(title: &str, lexicon: &TeamLexicon) -> Option<ParsedGame> {
    let lowered = title.to_lowercase();
    if EXCLUDED_PATTERNS.iter().any(|p| lowered.contains(p)) {
        return None;
    }
    let has_verb = ["beat", "win", " vs ", " vs. ", " @ "]
        .iter()
        .any(|v| lowered.contains(v));
    if !has_verb {
        return None;
    }
    let mut found: Vec<(usize, &str)> = Vec::new();
    let mut masked = lowered.clone();
    for name in lexicon.names() {
        if let Some(pos) = masked.find(name.as_str()) {
            found.push((pos, name));
            // mask so an overlapping shorter name cannot double-match
            masked.replace_range(pos..pos + name.len(), &"\u{0}".repeat(name.len()));
        }
    }
    if found.len() != 2 {
        return None;
    }
    found.sort_by_key(|(pos, _)| *pos);
    Some(ParsedGame {
        team_a: found[0].1.to_string(),
        team_b: found[1].1.to_string(),
    })
}

// ---------------------------------------------------------------------
// dataset construction
// ---------------------------------------------------------------------

/// Which side won, read from the oracle settlement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameOutcome {
    YesWon,
    NoWon,
    /// 0.5 settlements (void/split) carry no winner label.
    Void,
}

/// Per-market inputs assembled by the caller: cleaned fills split by
/// outcome token plus the settled result.
#[derive(Debug, Clone)]
pub struct MarketGameData {
    pub market_id: Hash32,
    pub title: String,
    pub game_start: DateTime<Utc>,
    pub yes_trades: Vec<PricedTrade>,
    pub no_trades: Vec<PricedTrade>,
    pub outcome: GameOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub market_id: Hash32,
    pub team: String,
    pub p: f64,
    pub y: u8,
    pub season: i32,
}

/// Season convention: games from August onward belong to the season
/// ending the following year.
pub fn season_of(game_start: DateTime<Utc>) -> i32 {
    if game_start.month() >= 8 {
        game_start.year() + 1
    } else {
        game_start.year()
    }
}

/// Expands markets into team-level samples: up to two rows per market,
/// one per side with usable pre-game trades. The complementary side is
/// never synthesized from 1 − p; a side without its own trades is
/// simply absent.
pub fn build_calibration_dataset(
    games: &[MarketGameData],
    lexicon: &TeamLexicon,
) -> Vec<CalibrationSample> {
    let mut samples = Vec::new();
    for game in games {
        let Some(parsed) = match_single_game_winner(&game.title, lexicon) else {
            continue;
        };
        let yes_won = match game.outcome {
            GameOutcome::YesWon => true,
            GameOutcome::NoWon => false,
            GameOutcome::Void => continue,
        };
        let season = season_of(game.game_start);
        match size_weighted_prob(&game.yes_trades, game.game_start) {
            Ok(p) => samples.push(CalibrationSample {
                market_id: game.market_id,
                team: parsed.team_a.clone(),
                p,
                y: u8::from(yes_won),
                season,
            }),
            Err(PricingError::NoPregameTrades) => {}
        }
        match size_weighted_prob(&game.no_trades, game.game_start) {
            Ok(p) => samples.push(CalibrationSample {
                market_id: game.market_id,
                team: parsed.team_b.clone(),
                p,
                y: u8::from(!yes_won),
                season,
            }),
            Err(PricingError::NoPregameTrades) => {}
        }
    }
    samples
}

/// Season-based partition: strictly earlier seasons train, the target
/// season tests.
pub fn split_by_season(
    samples: &[CalibrationSample],
    test_season: i32,
) -> (Vec<CalibrationSample>, Vec<CalibrationSample>) {
    let train = samples
        .iter()
        .filter(|s| s.season < test_season)
        .cloned()
        .collect();
    let test = samples
        .iter()
        .filter(|s| s.season == test_season)
        .cloned()
        .collect();
    (train, test)
}
