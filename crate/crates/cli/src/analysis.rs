//! Corpus-level analyses over the per-session variable table.

use std::collections::BTreeMap;

use biosession::clustering::{cluster_profile, fit_cluster_model, subject_code, ClusterConfig, ClusterModel};
use biosession::features::{Feature, Segment};
use biosession::numeric::{mean, sample_sd};
use biosession::session::{behavior_rates, AgeGroup, ClinicalProfile, LikertItem, PhaseLabel, RateKey, Sex};
use biosession::stats::{
    diagnostics, fit_glm, friedman, point_biserial, qq_normal, remove_outliers, spearman, vif_filter, wilcoxon_signed_rank, Family,
    GlmFit, GlmOptions, TestResult,
};
use serde::Serialize;

use crate::config::{AnalysisPlan, GlmPlan};
use crate::corpus::Processed;

/// Everything known about one session, flattened to named numbers.
#[derive(Debug, Clone)]
pub struct SessionRow {
    pub subject_id: String,
    pub session_index: u8,
    pub age_months: u32,
    pub sex: Sex,
    /// Session-level variables: physiological features over the whole
    /// post-baseline stretch, behavior rates and counts, Likert scores,
    /// clinical scores, age and sex.
    pub values: BTreeMap<String, f64>,
    /// Physiological features per scenario.
    pub scenarios: BTreeMap<PhaseLabel, BTreeMap<String, f64>>,
}

impl SessionRow {
    pub fn age_group(&self) -> AgeGroup {
        AgeGroup::from_months(self.age_months)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

pub fn physiological_names() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

pub fn behavior_names() -> Vec<String> {
    RateKey::all().iter().map(RateKey::name).chain(LikertItem::ALL.iter().map(|l| l.as_str().to_string())).collect()
}

pub fn clinical_names() -> Vec<String> {
    ClinicalProfile::FIELDS.iter().map(|s| s.to_string()).collect()
}

pub fn session_row(p: &Processed) -> SessionRow {
    let s = &p.session;
    let mut values = BTreeMap::new();
    let mut scenarios = BTreeMap::new();
    for v in &p.features {
        let named = v.values.iter().map(|(f, x)| (f.name().to_string(), *x));
        match v.segment {
            Segment::Session => values.extend(named),
            Segment::Scenario(label) => {
                scenarios.insert(label, named.collect());
            }
        }
    }
    if let Some(b) = &s.behavior {
        if let Ok(rates) = behavior_rates(b) {
            values.extend(rates.iter().map(|(k, r)| (k.name(), *r)));
        }
        for k in RateKey::all() {
            values.insert(format!("{}_count", k.name()), f64::from(b.count(k.feature, k.condition)));
        }
        values.extend(b.likert.iter().map(|(item, v)| (item.as_str().to_string(), f64::from(*v))));
    }
    if let Some(c) = &s.clinical {
        values.extend(ClinicalProfile::FIELDS.iter().zip(c.values()).map(|(n, v)| (n.to_string(), v)));
    }
    values.insert("age_months".into(), f64::from(s.meta.age_months));
    values.insert("sex_F".into(), if s.meta.sex == Sex::F { 1.0 } else { 0.0 });
    SessionRow { subject_id: s.meta.subject_id.clone(), session_index: s.session_index, age_months: s.meta.age_months, sex: s.meta.sex, values, scenarios }
}

/// One line of `tests.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub analysis_id: String,
    /// Sub-sample the test ran on (`all`, an age group, ...).
    pub subgroup: String,
    pub feature: String,
    pub group_a: String,
    pub group_b: String,
    pub statistic_name: String,
    pub statistic: f64,
    pub z: Option<f64>,
    pub p: f64,
    pub n: usize,
    pub method: String,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
}

impl TestRow {
    fn new(analysis_id: &str, subgroup: &str, feature: &str, groups: (&str, &str), t: &TestResult) -> Self {
        TestRow {
            analysis_id: analysis_id.into(),
            subgroup: subgroup.into(),
            feature: feature.into(),
            group_a: groups.0.into(),
            group_b: groups.1.into(),
            statistic_name: t.statistic_name.as_str().into(),
            statistic: t.statistic,
            z: t.z,
            p: t.p_value,
            n: t.n,
            method: t.method.as_str().into(),
            mean_a: None,
            mean_b: None,
        }
    }

    fn with_means(mut self, a: f64, b: f64) -> Self {
        self.mean_a = Some(a);
        self.mean_b = Some(b);
        self
    }
}

/// Indices whose value survives the 3-SD filter (all of them when the
/// filter is off or cannot run).
fn inliers(xs: &[f64], enabled: bool) -> Vec<bool> {
    let mut keep = vec![true; xs.len()];
    if enabled {
        if let Ok(f) = remove_outliers(xs) {
            for i in f.removed {
                keep[i] = false;
            }
        }
    }
    keep
}

fn test_variables(plan: &AnalysisPlan, rows: &[SessionRow], control: bool) -> Vec<String> {
    let mut names = if plan.variables.is_empty() {
        let mut v = physiological_names();
        v.extend(behavior_names());
        if control {
            v.extend(clinical_names());
        }
        v
    } else {
        plan.variables.clone()
    };
    names.retain(|n| rows.iter().any(|r| r.values.contains_key(n) || r.scenarios.values().any(|s| s.contains_key(n))));
    names
}

/// Spearman correlation with age and point-biserial correlation with sex.
pub fn control_tests(rows: &[SessionRow], plan: &AnalysisPlan) -> Vec<TestRow> {
    let mut out = Vec::new();
    for name in test_variables(plan, rows, true) {
        let present: Vec<&SessionRow> = rows.iter().filter(|r| r.get(&name).is_some()).collect();
        let ys: Vec<f64> = present.iter().map(|r| r.get(&name).unwrap()).collect();
        let keep = inliers(&ys, plan.remove_outliers);
        let (mut age, mut female, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for ((r, v), k) in present.iter().zip(&ys).zip(&keep) {
            if *k {
                age.push(f64::from(r.age_months));
                female.push(r.sex == Sex::F);
                y.push(*v);
            }
        }
        if let Ok(t) = spearman(&age, &y) {
            out.push(TestRow::new("age_spearman", "all", &name, ("age_months", ""), &t));
        }
        if let Ok(t) = point_biserial(&female, &y) {
            let by = |f: bool| mean(&y.iter().zip(&female).filter(|(_, s)| **s == f).map(|(v, _)| *v).collect::<Vec<_>>());
            out.push(TestRow::new("sex_point_biserial", "all", &name, ("M", "F"), &t).with_means(by(false), by(true)));
        }
    }
    out
}

fn age_group_name(g: AgeGroup) -> &'static str {
    match g {
        AgeGroup::PreAdolescent => "PreAdolescent",
        AgeGroup::Adolescent => "Adolescent",
    }
}

/// Friedman over the columns of `blocks` followed by pairwise Wilcoxon
/// tests. Blocks holding an outlier in any column are dropped first.
fn repeated_measures(id: &str, subgroup: &str, feature: &str, levels: &[String], blocks: Vec<Vec<f64>>, outliers: bool) -> Vec<TestRow> {
    let k = levels.len();
    let mut keep = vec![true; blocks.len()];
    for j in 0..k {
        let col: Vec<f64> = blocks.iter().map(|b| b[j]).collect();
        for (kk, ok) in keep.iter_mut().zip(inliers(&col, outliers)) {
            *kk &= ok;
        }
    }
    let blocks: Vec<Vec<f64>> = blocks.into_iter().zip(keep).filter(|(_, k)| *k).map(|(b, _)| b).collect();
    let mut out = Vec::new();
    if let Ok(t) = friedman(&blocks) {
        out.push(TestRow::new(&format!("{id}_friedman"), subgroup, feature, (&levels.join(","), ""), &t));
    }
    for a in 0..k {
        for b in a + 1..k {
            let xa: Vec<f64> = blocks.iter().map(|r| r[a]).collect();
            let xb: Vec<f64> = blocks.iter().map(|r| r[b]).collect();
            if let Ok(t) = wilcoxon_signed_rank(&xa, &xb) {
                out.push(TestRow::new(&format!("{id}_wilcoxon"), subgroup, feature, (&levels[a], &levels[b]), &t).with_means(mean(&xa), mean(&xb)));
            }
        }
    }
    out
}

const AGE_GROUPS: [AgeGroup; 2] = [AgeGroup::Adolescent, AgeGroup::PreAdolescent];

/// Scenario comparisons: each session with all three scenarios is a block.
pub fn scenario_tests(rows: &[SessionRow], plan: &AnalysisPlan) -> Vec<TestRow> {
    let levels: Vec<String> = PhaseLabel::SCENARIOS.iter().map(|l| l.as_str().to_string()).collect();
    let mut out = Vec::new();
    for g in AGE_GROUPS {
        for name in test_variables(plan, rows, false) {
            let blocks: Vec<Vec<f64>> = rows
                .iter()
                .filter(|r| r.age_group() == g)
                .filter_map(|r| PhaseLabel::SCENARIOS.iter().map(|l| r.scenarios.get(l).and_then(|m| m.get(&name)).copied()).collect())
                .collect();
            out.extend(repeated_measures("scenario", age_group_name(g), &name, &levels, blocks, plan.remove_outliers));
        }
    }
    out
}

/// Session comparisons: each subject with sessions 1, 2 and 3 is a block.
pub fn session_tests(rows: &[SessionRow], plan: &AnalysisPlan) -> Vec<TestRow> {
    let levels: Vec<String> = (1..=3).map(|k| format!("session{k}")).collect();
    let mut by_subject: BTreeMap<&str, Vec<&SessionRow>> = BTreeMap::new();
    for r in rows {
        by_subject.entry(&r.subject_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for g in AGE_GROUPS {
        for name in test_variables(plan, rows, false) {
            let blocks: Vec<Vec<f64>> = by_subject
                .values()
                .filter(|rs| rs[0].age_group() == g)
                .filter_map(|rs| (1..=3u8).map(|k| rs.iter().find(|r| r.session_index == k).and_then(|r| r.get(&name))).collect())
                .collect();
            out.extend(repeated_measures("session", age_group_name(g), &name, &levels, blocks, plan.remove_outliers));
        }
    }
    out
}

/// Per-scenario (or per-session) means of every variable, by age group.
pub type MeansTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

pub fn scenario_means(rows: &[SessionRow]) -> MeansTable {
    let mut acc: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        for (label, m) in &r.scenarios {
            for (name, v) in m {
                acc.entry((age_group_name(r.age_group()).into(), name.clone(), label.as_str().into())).or_default().push(*v);
            }
        }
    }
    collect_means(acc)
}

pub fn session_means(rows: &[SessionRow]) -> MeansTable {
    let mut acc: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        for (name, v) in &r.values {
            acc.entry((age_group_name(r.age_group()).into(), name.clone(), format!("session{}", r.session_index))).or_default().push(*v);
        }
    }
    collect_means(acc)
}

fn collect_means(acc: BTreeMap<(String, String, String), Vec<f64>>) -> MeansTable {
    let mut out = MeansTable::new();
    for ((g, name, level), xs) in acc {
        out.entry(g).or_default().entry(name).or_default().insert(level, mean(&xs));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VifEntry {
    pub predictor: String,
    pub vif: Option<f64>,
    pub kept: bool,
}

/// One GLM of `glm.json`, or the reason it could not be fitted.
#[derive(Debug, Clone, Serialize)]
pub struct GlmModel {
    pub target: String,
    pub family: Option<Family>,
    pub n: usize,
    pub outliers_removed: usize,
    pub diagnostics: Option<Diagnostics>,
    pub vif: Vec<VifEntry>,
    pub fit: Option<GlmFit>,
    pub error: Option<String>,
    #[serde(skip)]
    pub qq: Vec<(f64, f64)>,
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn glm_model(rows: &[SessionRow], target: &str, plan: &GlmPlan, outliers: bool) -> GlmModel {
    let mut m = GlmModel { target: target.into(), family: None, n: 0, outliers_removed: 0, diagnostics: None, vif: Vec::new(), fit: None, error: None, qq: Vec::new() };
    let complete: Vec<&SessionRow> =
        rows.iter().filter(|r| r.get(target).is_some() && plan.predictors.iter().all(|p| r.get(p).is_some())).collect();
    let ys: Vec<f64> = complete.iter().map(|r| r.get(target).unwrap()).collect();
    let keep = inliers(&ys, outliers);
    m.outliers_removed = keep.iter().filter(|k| !**k).count();
    let used: Vec<&SessionRow> = complete.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| *r).collect();
    let y: Vec<f64> = used.iter().map(|r| r.get(target).unwrap()).collect();
    m.n = y.len();
    m.qq = qq_normal(&y);
    m.diagnostics = diagnostics(&y)
        .ok()
        .map(|d| Diagnostics { skewness: d.skewness, excess_kurtosis: d.excess_kurtosis, shapiro_w: d.shapiro_w, shapiro_p: d.shapiro_p });
    let family = if y.iter().all(|v| *v >= 0.0 && v.fract() == 0.0) {
        Family::Poisson
    } else if y.iter().all(|v| *v > 0.0) {
        Family::Gamma
    } else {
        m.error = Some("target is neither a count nor strictly positive".into());
        return m;
    };
    m.family = Some(family);

    let columns: Vec<Vec<f64>> = plan.predictors.iter().map(|p| used.iter().map(|r| r.get(p).unwrap()).collect()).collect();
    let kept: Vec<usize> = if columns.len() >= 2 {
        match vif_filter(&columns, plan.vif_threshold) {
            Ok(rep) => {
                for (i, name) in plan.predictors.iter().enumerate() {
                    let kept_vif = rep.kept.iter().find(|(j, _)| *j == i).map(|(_, v)| *v);
                    let vif = kept_vif.or_else(|| rep.excluded.iter().find(|(j, _)| *j == i).map(|(_, v)| *v));
                    m.vif.push(VifEntry { predictor: name.clone(), vif: vif.and_then(finite_or_none), kept: kept_vif.is_some() });
                }
                rep.kept.iter().map(|(j, _)| *j).collect()
            }
            Err(e) => {
                m.error = Some(format!("VIF screening failed: {e}"));
                return m;
            }
        }
    } else {
        (0..columns.len()).collect()
    };
    let mut names = Vec::new();
    let mut z = Vec::new();
    for j in kept {
        let (mu, sd) = (mean(&columns[j]), sample_sd(&columns[j]));
        if sd > 0.0 {
            names.push(plan.predictors[j].clone());
            z.push(columns[j].iter().map(|x| (x - mu) / sd).collect());
        }
    }
    match fit_glm(&y, &z, &names, family, GlmOptions::default()) {
        Ok(fit) => m.fit = Some(fit),
        Err(e) => m.error = Some(e.to_string()),
    }
    m
}

pub fn glm_models(rows: &[SessionRow], plan: &GlmPlan, outliers: bool) -> Vec<GlmModel> {
    plan.targets.iter().map(|t| glm_model(rows, t, plan, outliers)).collect()
}

/// Clustering result with the sessions it covers.
#[derive(Debug, Clone)]
pub struct Clustering {
    /// (subject_id, session_index) per embedded row.
    pub keys: Vec<(String, u8)>,
    pub columns: Vec<String>,
    pub model: Result<ClusterModel, String>,
    pub validation: Vec<TestRow>,
    pub profile: BTreeMap<String, Vec<(f64, f64)>>,
}

/// Clusters sessions on behavior, age and (optionally) subject identity.
pub fn cluster_sessions(rows: &[SessionRow], cfg: &ClusterConfig, alpha: f64, validate: bool) -> Clustering {
    let mut columns = behavior_names();
    columns.push("age_months".into());
    let used: Vec<&SessionRow> = rows.iter().filter(|r| columns.iter().all(|c| r.get(c).is_some())).collect();
    let codes = subject_code(&used.iter().map(|r| r.subject_id.as_str()).collect::<Vec<_>>());
    let data: Vec<Vec<f64>> = used
        .iter()
        .zip(&codes)
        .map(|(r, code)| {
            let mut v: Vec<f64> = columns.iter().map(|c| r.get(c).unwrap()).collect();
            if cfg.include_subject_id {
                v.push(*code);
            }
            v
        })
        .collect();
    if cfg.include_subject_id {
        columns.push("subject_id".into());
    }
    let keys = used.iter().map(|r| (r.subject_id.clone(), r.session_index)).collect();
    let model = if data.is_empty() {
        Err("no session has complete behavioral data".to_string())
    } else {
        fit_cluster_model(&data, cfg).map_err(|e| e.to_string())
    };
    let mut out = Clustering { keys, columns, model, validation: Vec::new(), profile: BTreeMap::new() };
    if let (Ok(labels), true) = (out.model.as_ref().map(|m| m.labels.clone()), validate) {
        profile_clusters(&mut out, &used, &labels, alpha);
    }
    out
}

fn profile_clusters(out: &mut Clustering, used: &[&SessionRow], labels: &[usize], alpha: f64) {
    let mut names = vec!["age_months".to_string(), "sex_F".to_string()];
    names.extend(clinical_names());
    names.extend(physiological_names());
    for name in names {
        let (sub_labels, col): (Vec<usize>, Vec<f64>) =
            used.iter().zip(labels).filter_map(|(r, l)| r.get(&name).map(|v| (*l, v))).unzip();
        let Ok(p) = cluster_profile(&sub_labels, std::slice::from_ref(&name), &[col], alpha) else { continue };
        let f = &p.features[0];
        out.profile.insert(name.clone(), f.per_cluster.clone());
        for c in &f.comparisons {
            if let (Some(u), Some(pv), Some(method)) = (c.u, c.p, c.method) {
                let (a, b) = (format!("cluster{}", c.cluster_a), format!("cluster{}", c.cluster_b));
                out.validation.push(TestRow {
                    analysis_id: "cluster_mann_whitney".into(),
                    subgroup: "all".into(),
                    feature: name.clone(),
                    group_a: a,
                    group_b: b,
                    statistic_name: "U".into(),
                    statistic: u,
                    z: None,
                    p: pv,
                    n: p.sizes[c.cluster_a] + p.sizes[c.cluster_b],
                    method: method.as_str().into(),
                    mean_a: Some(f.per_cluster[c.cluster_a].0),
                    mean_b: Some(f.per_cluster[c.cluster_b].0),
                });
            }
        }
    }
}
