//! Error-rate estimators, DET curves and per-attack BER tables.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::attack::{apply_attack, AttackSpec};
use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::fusion::{feature_distance, fuse_scores, Thresholds};
use crate::pipeline::{clip_features, identify, ClipFeatures};
use crate::registry::RegistrationRecord;

/// `(pfp, pfn)`: impostor scores below `threshold` over all impostors, and
/// genuine scores at or above it over all genuine scores.
pub fn compute_rates(genuine: &[f64], impostor: &[f64], threshold: f64) -> Result<(f64, f64)> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyScores);
    }
    let fp = impostor.iter().filter(|&&s| s < threshold).count();
    let fn_ = genuine.iter().filter(|&&s| s >= threshold).count();
    Ok((fp as f64 / impostor.len() as f64, fn_ as f64 / genuine.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub pfp: f64,
    pub pfn: f64,
}

/// Sweeps the threshold over 0, every distinct score, and just above the
/// largest score.
pub fn det_curve(genuine: &[f64], impostor: &[f64]) -> Result<Vec<DetPoint>> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    if let Some(&bad) = ts.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::NegativeScore(bad));
    }
    ts.push(0.0);
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    ts.push(ts[ts.len() - 1].next_up());
    ts.into_iter()
        .map(|t| {
            let (pfp, pfn) = compute_rates(genuine, impostor, t)?;
            Ok(DetPoint { threshold: t, pfp, pfn })
        })
        .collect()
}

pub fn write_det_csv(points: &[DetPoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "threshold,pfp,pfn")?;
    for p in points {
        writeln!(w, "{:.17e},{:.6},{:.6}", p.threshold, p.pfp, p.pfn)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    TwoD,
    Depth,
    Fused,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::TwoD, Channel::Depth, Channel::Fused];
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::TwoD => "2d",
            Channel::Depth => "depth",
            Channel::Fused => "fused",
        })
    }
}

/// Features of one attacked copy of a registered clip.
#[derive(Debug, Clone)]
pub struct AttackedQuery {
    pub attack: String,
    pub id: String,
    pub features: ClipFeatures,
}

/// Applies each spec to both channels of each clip and extracts features.
/// Output is ordered by spec, then by clip.
pub fn attacked_queries(
    clips: &[(String, FrameSequence, FrameSequence)],
    specs: &[AttackSpec],
) -> Result<Vec<AttackedQuery>> {
    let jobs: Vec<(&AttackSpec, &(String, FrameSequence, FrameSequence))> =
        specs.iter().flat_map(|s| clips.iter().map(move |c| (s, c))).collect();
    jobs.into_par_iter()
        .map(|(spec, (id, video, depth))| {
            let features = clip_features(&apply_attack(video, spec)?, &apply_attack(depth, spec)?)?;
            Ok(AttackedQuery {
                attack: spec.label(),
                id: id.clone(),
                features,
            })
        })
        .collect()
}

/// Distances and BERs of one attacked query against its own record.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryScore {
    pub attack: String,
    pub id: String,
    pub d_2d: f64,
    pub d_depth: f64,
    pub d_fused: f64,
    pub ber_2d: f64,
    pub ber_depth: f64,
    pub ber_fused: f64,
}

impl QueryScore {
    pub fn distance(&self, ch: Channel) -> f64 {
        match ch {
            Channel::TwoD => self.d_2d,
            Channel::Depth => self.d_depth,
            Channel::Fused => self.d_fused,
        }
    }

    pub fn ber(&self, ch: Channel) -> f64 {
        match ch {
            Channel::TwoD => self.ber_2d,
            Channel::Depth => self.ber_depth,
            Channel::Fused => self.ber_fused,
        }
    }
}

pub fn score_queries(
    records: &[RegistrationRecord],
    queries: &[AttackedQuery],
    gamma: f64,
) -> Result<Vec<QueryScore>> {
    let by_id: HashMap<&str, &RegistrationRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    queries
        .par_iter()
        .map(|q| {
            let rec = by_id.get(q.id.as_str()).ok_or_else(|| Error::UnknownId(q.id.clone()))?;
            let d_2d = feature_distance(&q.features.fn_2d, &rec.fn_2d)?;
            let d_depth = feature_distance(&q.features.fn_depth, &rec.fn_depth)?;
            let ident = identify(&rec.ownership(), &q.features, gamma)?;
            Ok(QueryScore {
                attack: q.attack.clone(),
                id: q.id.clone(),
                d_2d,
                d_depth,
                d_fused: fuse_scores(d_2d, d_depth, gamma)?,
                ber_2d: ident.ber_2d,
                ber_depth: ident.ber_depth,
                ber_fused: ident.ber_fused,
            })
        })
        .collect()
}

/// Attack labels in order of first appearance.
fn attack_order(scores: &[QueryScore]) -> Vec<&str> {
    let mut order: Vec<&str> = Vec::new();
    for s in scores {
        if !order.contains(&s.attack.as_str()) {
            order.push(&s.attack);
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRow {
    pub attack: String,
    pub channel: Channel,
    pub mean_ber: f64,
    pub n: usize,
}

/// Mean BER per attack and channel; the fused column averages per-clip fused values.
pub fn ber_table(scores: &[QueryScore]) -> Vec<BerRow> {
    let mut rows = Vec::new();
    for attack in attack_order(scores) {
        let group: Vec<&QueryScore> = scores.iter().filter(|s| s.attack == attack).collect();
        for ch in Channel::ALL {
            let sum: f64 = group.iter().map(|s| s.ber(ch)).sum();
            rows.push(BerRow {
                attack: attack.to_string(),
                channel: ch,
                mean_ber: sum / group.len() as f64,
                n: group.len(),
            });
        }
    }
    rows
}

pub fn write_ber_csv(rows: &[BerRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "attack,channel,mean_ber,n")?;
    for r in rows {
        writeln!(w, "{},{},{:.6},{}", r.attack, r.channel, r.mean_ber, r.n)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfnRow {
    pub attack: String,
    pub channel: Channel,
    pub pfn: f64,
    pub n: usize,
}

/// False-negative rate per attack and channel at fixed thresholds.
pub fn pfn_table(scores: &[QueryScore], th: &Thresholds) -> Vec<PfnRow> {
    let mut rows = Vec::new();
    for attack in attack_order(scores) {
        let group: Vec<&QueryScore> = scores.iter().filter(|s| s.attack == attack).collect();
        for (ch, t) in [
            (Channel::TwoD, th.t_2d),
            (Channel::Depth, th.t_depth),
            (Channel::Fused, th.t_fusion),
        ] {
            let misses = group.iter().filter(|s| s.distance(ch) >= t).count();
            rows.push(PfnRow {
                attack: attack.to_string(),
                channel: ch,
                pfn: misses as f64 / group.len() as f64,
                n: group.len(),
            });
        }
    }
    rows
}

pub fn write_pfn_csv(rows: &[PfnRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "attack,channel,pfn,n")?;
    for r in rows {
        writeln!(w, "{},{},{:.6},{}", r.attack, r.channel, r.pfn, r.n)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_rates(g: &[f64], i: &[f64], t: f64) -> (f64, f64) {
        let mut fp = 0;
        for s in i {
            if *s < t {
                fp += 1;
            }
        }
        let mut fneg = 0;
        for s in g {
            if !(*s < t) {
                fneg += 1;
            }
        }
        (fp as f64 / i.len() as f64, fneg as f64 / g.len() as f64)
    }

    #[test]
    fn hand_counted_fixtures() {
        assert_eq!(compute_rates(&[0.1, 0.2], &[0.5, 0.9], 0.3).unwrap(), (0.0, 0.0));
        assert_eq!(compute_rates(&[0.1, 0.2], &[0.5, 0.9], 0.0).unwrap(), (0.0, 1.0));
        assert_eq!(compute_rates(&[0.1, 0.2], &[0.5, 0.9], 1.0).unwrap(), (1.0, 0.0));
        assert_eq!(compute_rates(&[0.1, 0.6, 0.7], &[0.5, 0.9], 0.6).unwrap(), (0.5, 2.0 / 3.0));
        assert!(compute_rates(&[], &[0.5], 0.3).is_err());
        assert!(compute_rates(&[0.5], &[], 0.3).is_err());
    }

    #[test]
    fn det_separated_and_endpoints() {
        let det = det_curve(&[0.1, 0.2], &[0.5, 0.9]).unwrap();
        assert!(det.iter().any(|p| p.pfp == 0.0 && p.pfn == 0.0));
        let first = det[0];
        let last = det[det.len() - 1];
        assert_eq!((first.pfp, first.pfn), (0.0, 1.0));
        assert_eq!((last.pfp, last.pfn), (1.0, 0.0));
        assert!(det_curve(&[-0.1], &[0.2]).is_err());
    }

    #[test]
    fn det_identical_distributions_sum_to_one() {
        let g: Vec<f64> = (0..200).map(|i| (i as f64 * 0.6180339887).fract()).collect();
        for p in det_curve(&g, &g).unwrap() {
            assert!((p.pfp + p.pfn - 1.0).abs() < 1e-12);
        }
    }

    fn score(attack: &str, d: f64, b2: f64, bd: f64) -> QueryScore {
        QueryScore {
            attack: attack.into(),
            id: "x".into(),
            d_2d: d,
            d_depth: d * 2.0,
            d_fused: d,
            ber_2d: b2,
            ber_depth: bd,
            ber_fused: fuse_scores(b2, bd, 0.1).unwrap(),
        }
    }

    #[test]
    fn tables_keep_first_appearance_order() {
        let s = vec![
            score("GB 9", 0.1, 0.1, 0.2),
            score("AF 9", 0.3, 0.0, 0.0),
            score("GB 9", 0.5, 0.3, 0.2),
        ];
        let rows = ber_table(&s);
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].attack.as_str(), rows[0].channel, rows[0].n), ("GB 9", Channel::TwoD, 2));
        assert!((rows[0].mean_ber - 0.2).abs() < 1e-15);
        assert_eq!(rows[3].attack, "AF 9");
        assert_eq!(rows[5].mean_ber, 0.0);

        let th = Thresholds::new(0.4, 0.4, 0.4, 0.1).unwrap();
        let p = pfn_table(&s, &th);
        assert_eq!(p[0].pfn, 0.5);
        assert_eq!(p[1].pfn, 0.5); // depth distances 0.2 and 1.0
        assert_eq!(p[4].pfn, 1.0); // AF depth 0.6

        let mut buf = Vec::new();
        write_ber_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("attack,channel,mean_ber,n\nGB 9,2d,0.200000,2\n"));
    }

    proptest! {
        #[test]
        fn rates_match_recount(
            g in prop::collection::vec(0.0f64..2.0, 1..30),
            i in prop::collection::vec(0.0f64..2.0, 1..30),
            t in 0.0f64..2.5,
        ) {
            prop_assert_eq!(compute_rates(&g, &i, t).unwrap(), brute_rates(&g, &i, t));
        }

        #[test]
        fn det_is_monotone(
            g in prop::collection::vec(0.0f64..2.0, 1..30),
            i in prop::collection::vec(0.0f64..2.0, 1..30),
        ) {
            let det = det_curve(&g, &i).unwrap();
            prop_assert_eq!((det[0].pfp, det[0].pfn), (0.0, 1.0));
            let last = det[det.len() - 1];
            prop_assert_eq!((last.pfp, last.pfn), (1.0, 0.0));
            for w in det.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].pfp <= w[1].pfp);
                prop_assert!(w[0].pfn >= w[1].pfn);
            }
        }
    }
}
