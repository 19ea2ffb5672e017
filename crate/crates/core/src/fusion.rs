//! Feature distances, attention-based score fusion, threshold calibration and
//! the independent / fused matching logic.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::registry::Registry;

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_TARGET_PFP: f64 = 0.01;

/// Mean squared difference of two feature vectors.
pub fn feature_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Attention-based fusion of two nonnegative scores (distances or BERs).
///
/// With `x1 = 1/s1 + 1/s2` and `x2 = |1/s1 - 1/s2|` the result is
/// `1 / (0.5 * (x1 + x2 / (1 + gamma)))`. It lies between the smaller score
/// and the harmonic mean, leaning towards the smaller one as `gamma -> 0`.
/// A zero score is a perfect match and fuses to zero.
pub fn fuse_scores(s1: f64, s2: f64, gamma: f64) -> Result<f64> {
    for s in [s1, s2] {
        if s < 0.0 || s.is_nan() {
            return Err(Error::NegativeScore(s));
        }
    }
    if gamma <= -1.0 {
        return Err(Error::Config(format!("gamma {gamma} must exceed -1")));
    }
    if s1 == 0.0 || s2 == 0.0 {
        return Ok(0.0);
    }
    let (a, b) = (1.0 / s1, 1.0 / s2);
    let x1 = a + b;
    let x2 = (a - b).abs();
    Ok(1.0 / (0.5 * (x1 + x2 / (1.0 + gamma))))
}

/// Same combiner applied to bit error rates.
pub fn fused_ber(b_2d: f64, b_depth: f64, gamma: f64) -> Result<f64> {
    fuse_scores(b_2d, b_depth, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t_2d: f64,
    pub t_depth: f64,
    pub t_fusion: f64,
    pub gamma: f64,
}

impl Thresholds {
    pub fn new(t_2d: f64, t_depth: f64, t_fusion: f64, gamma: f64) -> Result<Self> {
        let th = Thresholds {
            t_2d,
            t_depth,
            t_fusion,
            gamma,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("T_2d", self.t_2d), ("T_depth", self.t_depth), ("T_fusion", self.t_fusion)] {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("{name} = {t} must be nonnegative")));
            }
        }
        if !(self.gamma > -1.0) {
            return Err(Error::Config(format!("gamma {} must exceed -1", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// 2D frame and depth map are matched separately.
    Independent,
    /// The two distances are fused before thresholding.
    Fused,
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(MatchMode::Independent),
            "fused" => Ok(MatchMode::Fused),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Independent => "independent",
            MatchMode::Fused => "fused",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Match2d,
    MatchDepth,
    MatchFused,
    NoMatch,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Match2d => "match-2d",
            Decision::MatchDepth => "match-depth",
            Decision::MatchFused => "match-fused",
            Decision::NoMatch => "no-match",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub id: String,
    pub d_2d: f64,
    pub d_depth: f64,
    pub d_fused: f64,
    /// Per-component flags; in independent mode both can be set.
    pub matched_2d: bool,
    pub matched_depth: bool,
    pub decision: Decision,
    pub mode: MatchMode,
}

impl MatchResult {
    /// Distance that decided the match, used for ranking.
    pub fn deciding_distance(&self) -> f64 {
        match self.decision {
            Decision::Match2d => self.d_2d,
            Decision::MatchDepth => self.d_depth,
            Decision::MatchFused | Decision::NoMatch => self.d_fused,
        }
    }
}

/// Classifies one record's distances against the thresholds.
pub fn decide(id: &str, d_2d: f64, d_depth: f64, th: &Thresholds, mode: MatchMode) -> Result<MatchResult> {
    let d_fused = fuse_scores(d_2d, d_depth, th.gamma)?;
    let (matched_2d, matched_depth, decision) = match mode {
        MatchMode::Independent => {
            let m2 = d_2d < th.t_2d;
            let md = d_depth < th.t_depth;
            let decision = match (m2, md) {
                (true, true) if d_depth < d_2d => Decision::MatchDepth,
                (true, _) => Decision::Match2d,
                (false, true) => Decision::MatchDepth,
                (false, false) => Decision::NoMatch,
            };
            (m2, md, decision)
        }
        MatchMode::Fused => {
            let m = d_fused < th.t_fusion;
            (false, false, if m { Decision::MatchFused } else { Decision::NoMatch })
        }
    };
    Ok(MatchResult {
        id: id.to_owned(),
        d_2d,
        d_depth,
        d_fused,
        matched_2d,
        matched_depth,
        decision,
        mode,
    })
}

/// Scans the registry and returns matching records, closest first.
pub fn match_query(
    q_2d: &FeatureVector,
    q_depth: &FeatureVector,
    db: &Registry,
    th: &Thresholds,
    mode: MatchMode,
) -> Result<Vec<MatchResult>> {
    th.validate()?;
    let mut out = Vec::new();
    for (id, f2, fd) in db.iterate_features()? {
        let r = decide(id, feature_distance(q_2d, f2)?, feature_distance(q_depth, fd)?, th, mode)?;
        if r.decision != Decision::NoMatch {
            out.push(r);
        }
    }
    // stable sort keeps insertion order among ties
    out.sort_by(|a, b| a.deciding_distance().total_cmp(&b.deciding_distance()));
    Ok(out)
}

/// Threshold `t` such that the fraction of `scores` strictly below `t` is
/// `target`, interpolating linearly between order statistics with an anchor
/// at zero. A target of 1 returns a value just above the maximum.
pub fn quantile_threshold(scores: &[f64], target: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("target rate {target} outside [0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let max = sorted[n - 1];
    if target >= 1.0 {
        return Ok(max.next_up());
    }
    let pos = target * n as f64;
    let i = pos.floor() as usize; // 0 <= i < n
    let lo = if i == 0 { 0.0 } else { sorted[i - 1] };
    let hi = sorted[i];
    Ok(lo + (pos - i as f64) * (hi - lo))
}

/// Fraction of `scores` strictly below `t`.
pub fn fraction_below(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s < t).count() as f64 / scores.len() as f64
}

/// Distances between every pair of distinct clips.
#[derive(Debug, Clone, Default)]
pub struct ImpostorScores {
    pub d_2d: Vec<f64>,
    pub d_depth: Vec<f64>,
    pub d_fused: Vec<f64>,
}

pub fn impostor_scores(
    features: &[(&FeatureVector, &FeatureVector)],
    gamma: f64,
) -> Result<ImpostorScores> {
    let mut s = ImpostorScores::default();
    for (i, a) in features.iter().enumerate() {
        for b in &features[i + 1..] {
            let d2 = feature_distance(a.0, b.0)?;
            let dd = feature_distance(a.1, b.1)?;
            s.d_2d.push(d2);
            s.d_depth.push(dd);
            s.d_fused.push(fuse_scores(d2, dd, gamma)?);
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub name: &'static str,
    pub value: f64,
    pub target_pfp: f64,
    pub realized_pfp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub thresholds: Thresholds,
    pub rows: Vec<CalibrationRow>,
}

impl Calibration {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "threshold,value,target_pfp,realized_pfp")?;
        for r in &self.rows {
            writeln!(w, "{},{:.17e},{},{:.6}", r.name, r.value, r.target_pfp, r.realized_pfp)?;
        }
        writeln!(w, "gamma,{},,", self.thresholds.gamma)
    }

    /// Reads back thresholds written by [`Calibration::write_csv`].
    pub fn read_thresholds_csv(text: &str) -> Result<Thresholds> {
        let mut t = [None; 3];
        let mut gamma = DEFAULT_GAMMA;
        for line in text.lines().skip(1) {
            let mut cols = line.split(',');
            let (Some(name), Some(value)) = (cols.next(), cols.next()) else {
                continue;
            };
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold value {value:?}")))?;
            match name.trim() {
                "T_2d" => t[0] = Some(v),
                "T_depth" => t[1] = Some(v),
                "T_fusion" => t[2] = Some(v),
                "gamma" => gamma = v,
                _ => {}
            }
        }
        match t {
            [Some(a), Some(b), Some(c)] => Thresholds::new(a, b, c, gamma),
            _ => Err(Error::Config("thresholds file lacks T_2d, T_depth or T_fusion".into())),
        }
    }
}

/// Sets each threshold at the `target_pfp` quantile of distinct-pair distances.
pub fn calibrate_from_features(
    features: &[(&FeatureVector, &FeatureVector)],
    target_pfp: f64,
    gamma: f64,
) -> Result<Calibration> {
    if features.len() < 2 {
        return Err(Error::InsufficientRecords(features.len()));
    }
    let imp = impostor_scores(features, gamma)?;
    let mut rows = Vec::new();
    let mut values = [0.0; 3];
    for (slot, (name, scores)) in [("T_2d", &imp.d_2d), ("T_depth", &imp.d_depth), ("T_fusion", &imp.d_fused)]
        .into_iter()
        .enumerate()
    {
        let t = quantile_threshold(scores, target_pfp)?;
        values[slot] = t;
        rows.push(CalibrationRow {
            name,
            value: t,
            target_pfp,
            realized_pfp: fraction_below(scores, t),
        });
    }
    Ok(Calibration {
        thresholds: Thresholds::new(values[0], values[1], values[2], gamma)?,
        rows,
    })
}

/// Calibrates from the registry's records plus any extra clips' features.
pub fn calibrate_thresholds(
    db: &Registry,
    extra: &[(FeatureVector, FeatureVector)],
    target_pfp: f64,
    gamma: f64,
) -> Result<Calibration> {
    let mut features: Vec<(&FeatureVector, &FeatureVector)> =
        db.iterate_features()?.map(|(_, a, b)| (a, b)).collect();
    features.extend(extra.iter().map(|(a, b)| (a, b)));
    calibrate_from_features(&features, target_pfp, gamma)
}
