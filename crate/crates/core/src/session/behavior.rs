use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SessionError;

/// Observed social-interaction features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SocialFeature {
    #[serde(rename = "SO_Peers")]
    SoPeers,
    #[serde(rename = "SR_Peers")]
    SrPeers,
    /// Social openings towards the therapist; spontaneous only.
    #[serde(rename = "SO_Therapist")]
    SoTherapist,
    #[serde(rename = "SR_Therapist")]
    SrTherapist,
}

impl SocialFeature {
    pub const ALL: [SocialFeature; 4] = [
        SocialFeature::SoPeers,
        SocialFeature::SrPeers,
        SocialFeature::SoTherapist,
        SocialFeature::SrTherapist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SocialFeature::SoPeers => "SO_Peers",
            SocialFeature::SrPeers => "SR_Peers",
            SocialFeature::SoTherapist => "SO_Therapist",
            SocialFeature::SrTherapist => "SR_Therapist",
        }
    }

    /// Conditions under which this feature is coded.
    pub fn conditions(self) -> &'static [Condition] {
        match self {
            SocialFeature::SoTherapist => &[Condition::Spontaneous],
            _ => &Condition::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Spontaneous,
    Suggested,
    Indicated,
    /// Suggested + Indicated.
    Prompted,
}

impl Condition {
    pub const ALL: [Condition; 4] =
        [Condition::Spontaneous, Condition::Suggested, Condition::Indicated, Condition::Prompted];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Spontaneous => "Spontaneous",
            Condition::Suggested => "Suggested",
            Condition::Indicated => "Indicated",
            Condition::Prompted => "Prompted",
        }
    }
}

/// Likert-rated observation items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LikertItem {
    #[serde(rename = "Adaptation_Diff")]
    AdaptationDiff,
    #[serde(rename = "VS_Diff")]
    VsDiff,
    Involvement,
    #[serde(rename = "Relation_PP")]
    RelationPp,
    Instructions,
}

impl LikertItem {
    pub const ALL: [LikertItem; 5] = [
        LikertItem::AdaptationDiff,
        LikertItem::VsDiff,
        LikertItem::Involvement,
        LikertItem::RelationPp,
        LikertItem::Instructions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LikertItem::AdaptationDiff => "Adaptation_Diff",
            LikertItem::VsDiff => "VS_Diff",
            LikertItem::Involvement => "Involvement",
            LikertItem::RelationPp => "Relation_PP",
            LikertItem::Instructions => "Instructions",
        }
    }

    /// Scale maximum used when a file does not declare one. Difficulty items
    /// run 0–4, the others 0–5.
    pub fn default_max(self) -> u8 {
        match self {
            LikertItem::AdaptationDiff | LikertItem::VsDiff => 4,
            _ => 5,
        }
    }
}

/// `(feature, condition)` key of a normalized behavior rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RateKey {
    pub feature: SocialFeature,
    pub condition: Condition,
}

impl RateKey {
    /// All 13 coded rates, in registry order.
    pub fn all() -> Vec<RateKey> {
        SocialFeature::ALL
            .iter()
            .flat_map(|f| f.conditions().iter().map(move |c| RateKey { feature: *f, condition: *c }))
            .collect()
    }

    /// Column name such as `SO_Peers_Spontaneous`.
    pub fn name(&self) -> String {
        format!("{}_{}", self.feature.as_str(), self.condition.as_str())
    }
}

/// Observation-form counts and ratings for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralRecord {
    /// Annotated activity duration in minutes; rates are per minute of activity.
    pub duration_min: f64,
    counts: BTreeMap<RateKey, u32>,
    pub likert: BTreeMap<LikertItem, u8>,
    pub likert_max: BTreeMap<LikertItem, u8>,
}

impl BehavioralRecord {
    /// Builds a record from raw counts. A missing Prompted count is derived as
    /// Suggested + Indicated; a present one must equal that sum.
    pub fn new(
        duration_min: f64,
        counts: impl IntoIterator<Item = (SocialFeature, Condition, u32)>,
        likert: BTreeMap<LikertItem, u8>,
        likert_max: BTreeMap<LikertItem, u8>,
    ) -> Result<Self, SessionError> {
        let mut map = BTreeMap::new();
        for (feature, condition, n) in counts {
            let key = RateKey { feature, condition };
            if map.insert(key, n).is_some() {
                return Err(SessionError::invariant(
                    format!("counts.{}.{}", feature.as_str(), condition.as_str()),
                    "duplicate count",
                ));
            }
        }
        for f in SocialFeature::ALL {
            if f == SocialFeature::SoTherapist {
                continue;
            }
            let key = |c| RateKey { feature: f, condition: c };
            let suggested = map.get(&key(Condition::Suggested)).copied();
            let indicated = map.get(&key(Condition::Indicated)).copied();
            if !map.contains_key(&key(Condition::Prompted)) && (suggested.is_some() || indicated.is_some()) {
                map.insert(key(Condition::Prompted), suggested.unwrap_or(0) + indicated.unwrap_or(0));
            }
        }
        let record = BehavioralRecord { duration_min, counts: map, likert, likert_max };
        if let Some((path, message)) = record.invariant_violations().into_iter().next() {
            return Err(SessionError::Invariant { path, message });
        }
        Ok(record)
    }

    /// Count for a feature/condition, zero when not coded.
    pub fn count(&self, feature: SocialFeature, condition: Condition) -> u32 {
        self.counts.get(&RateKey { feature, condition }).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> impl Iterator<Item = (RateKey, u32)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }

    pub fn likert_max_for(&self, item: LikertItem) -> u8 {
        self.likert_max.get(&item).copied().unwrap_or_else(|| item.default_max())
    }

    pub(crate) fn invariant_violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.duration_min.is_finite() && self.duration_min >= 0.0) {
            out.push(("duration_min".into(), format!("must be finite and non-negative, got {}", self.duration_min)));
        }
        for key in self.counts.keys() {
            if !key.feature.conditions().contains(&key.condition) {
                out.push((
                    format!("counts.{}.{}", key.feature.as_str(), key.condition.as_str()),
                    format!("{} is coded only as Spontaneous", key.feature.as_str()),
                ));
            }
        }
        for f in SocialFeature::ALL {
            let get = |c| self.counts.get(&RateKey { feature: f, condition: c }).copied();
            if let (Some(s), Some(i), Some(p)) =
                (get(Condition::Suggested), get(Condition::Indicated), get(Condition::Prompted))
            {
                if u64::from(s) + u64::from(i) != u64::from(p) {
                    out.push((
                        format!("counts.{}.Prompted", f.as_str()),
                        format!("Prompted ({p}) must equal Suggested ({s}) + Indicated ({i})"),
                    ));
                }
            }
        }
        for (item, max) in &self.likert_max {
            if *max > 5 || *max == 0 {
                out.push((format!("likert_max.{}", item.as_str()), format!("maximum must be in 1..=5, got {max}")));
            }
        }
        for (item, v) in &self.likert {
            let max = self.likert_max_for(*item);
            if *v > max {
                out.push((format!("likert.{}", item.as_str()), format!("rating {v} exceeds scale maximum {max}")));
            }
        }
        out
    }
}

/// Per-minute rates for all 13 coded `(feature, condition)` pairs.
pub fn behavior_rates(b: &BehavioralRecord) -> Result<BTreeMap<RateKey, f64>, SessionError> {
    if !(b.duration_min > 0.0) {
        return Err(SessionError::ZeroDuration);
    }
    Ok(RateKey::all()
        .into_iter()
        .map(|k| (k, f64::from(b.count(k.feature, k.condition)) / b.duration_min))
        .collect())
}
