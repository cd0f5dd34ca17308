//! Independent reference implementations shared by the property and
//! acceptance targets. Nothing here calls the library's scoring code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

use mcbench::dataset::{Attribute, AttributeGroup, AttributeKind, AttributeSchema, ChoiceInstance, Value};
use mcbench::gateway::{DecisionRecord, Prediction};

pub fn as_records(
    truth: &[usize],
    pred: &[Option<usize>],
    c: usize,
) -> (Vec<DecisionRecord>, BTreeMap<String, String>, Vec<String>) {
    let labels: Vec<String> = (0..c).map(|i| format!("M{i}")).collect();
    let mut truths = BTreeMap::new();
    let mut records = Vec::new();
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        let id = format!("a{i:04}");
        truths.insert(id.clone(), labels[*t].clone());
        let mut r = DecisionRecord::invalid(&id, "fp", "th", None);
        if let Some(p) = p {
            r.predicted_mode = Prediction::Mode(labels[*p].clone());
        }
        records.push(r);
    }
    (records, truths, labels)
}

pub struct ReferenceMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub dist_mae: f64,
    pub jsd: f64,
    pub cross_entropy: f64,
    pub invalid: u64,
}

/// Direct counting over the label vectors; INVALID predictions are misses
/// for their true class and are left out of the predicted shares.
pub fn reference_metrics(truth: &[usize], pred: &[Option<usize>], c: usize, eps: f64) -> ReferenceMetrics {
    let n = truth.len() as f64;
    let mut active = 0.0;
    let (mut ps, mut rs, mut fs, mut fw) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..c {
        let tp = truth.iter().zip(pred).filter(|(t, p)| **t == k && **p == Some(k)).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(t, p)| **t != k && **p == Some(k)).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == k && **p != Some(k)).count() as f64;
        let support = tp + fn_;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        fw += support * f1 / n;
        if support > 0.0 || tp + fp > 0.0 {
            active += 1.0;
            ps += precision;
            rs += recall;
            fs += f1;
        }
    }
    let valid: Vec<usize> = pred.iter().flatten().copied().collect();
    let share = |xs: &[usize], k: usize| xs.iter().filter(|&&x| x == k).count() as f64 / xs.len() as f64;
    let p: Vec<f64> = (0..c).map(|k| share(truth, k)).collect();
    let q: Vec<f64> = (0..c).map(|k| share(&valid, k)).collect();
    let smooth = |v: &[f64]| v.iter().map(|x| (x + eps) / (1.0 + c as f64 * eps)).collect::<Vec<_>>();
    let (ps_, qs_) = (smooth(&p), smooth(&q));
    let m: Vec<f64> = ps_.iter().zip(&qs_).map(|(a, b)| 0.5 * (a + b)).collect();
    let kl = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * (x / y).ln()).sum::<f64>();
    ReferenceMetrics {
        accuracy: truth.iter().zip(pred).filter(|(t, p)| Some(**t) == **p).count() as f64 / n,
        precision_macro: ps / active,
        recall_macro: rs / active,
        f1_macro: fs / active,
        f1_weighted: fw,
        dist_mae: p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / c as f64,
        jsd: 0.5 * kl(&ps_, &m) + 0.5 * kl(&qs_, &m),
        cross_entropy: -ps_.iter().zip(&qs_).map(|(a, b)| a * b.ln()).sum::<f64>(),
        invalid: pred.iter().filter(|p| p.is_none()).count() as u64,
    }
}

/// Relative agreement to 1e-9, absolute near zero.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

/// Random labels with a skewed truth (so classes can be absent) and a
/// random INVALID rate.
pub fn random_cell(rng: &mut impl Rng) -> (usize, Vec<usize>, Vec<Option<usize>>) {
    let c = rng.random_range(2..=6);
    let n = rng.random_range(10..=200);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c).min(rng.random_range(0..c))).collect();
    let invalid_rate = rng.random_range(0.0..0.2);
    let pred = truth
        .iter()
        .map(|&t| {
            if rng.random_bool(invalid_rate) {
                None
            } else if rng.random_bool(0.5) {
                Some(t)
            } else {
                Some(rng.random_range(0..c))
            }
        })
        .collect();
    (c, truth, pred)
}

/// Weighted similarity recomputed from raw values, with min-max ranges
/// taken over `pool`. Weights are in socio, trip_num, trip_cat, additional
/// order.
pub fn reference_similarity(
    schema: &AttributeSchema,
    weights: [f64; 4],
    pool: &[ChoiceInstance],
    a: &ChoiceInstance,
    b: &ChoiceInstance,
) -> f64 {
    let groups = [AttributeGroup::Socio, AttributeGroup::TripNum, AttributeGroup::TripCat, AttributeGroup::Additional];
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, w) in groups.iter().zip(weights) {
        let attrs = schema.attributes.iter().filter(|x| x.group == *g);
        let component = if *g == AttributeGroup::TripNum {
            let mut sq = 0.0;
            let mut any = false;
            for attr in attrs.filter(|x| x.kind == AttributeKind::Continuous) {
                let (Some(Value::Number(x)), Some(Value::Number(y))) = (a.values.get(&attr.name), b.values.get(&attr.name))
                else {
                    continue;
                };
                let seen: Vec<f64> = pool
                    .iter()
                    .filter_map(|p| match p.values.get(&attr.name) {
                        Some(Value::Number(v)) => Some(*v),
                        _ => None,
                    })
                    .collect();
                let lo = seen.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scale = |v: f64| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                sq += (scale(*x) - scale(*y)).powi(2);
                any = true;
            }
            any.then(|| 1.0 / (1.0 + sq.sqrt()))
        } else {
            let scores: Vec<f64> = attrs
                .filter_map(|attr| match (a.values.get(&attr.name), b.values.get(&attr.name)) {
                    (Some(Value::Level(x)), Some(Value::Level(y))) => Some(match attr.kind {
                        AttributeKind::Ordinal => match x.abs_diff(*y) {
                            0 => 1.0,
                            1 => 0.5,
                            _ => 0.0,
                        },
                        _ => f64::from(u8::from(x == y)),
                    }),
                    _ => None,
                })
                .collect();
            (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
        };
        if let Some(s) = component {
            num += w * s;
            den += w;
        }
    }
    num / den
}

/// A random schema mixing ordinal, nominal and continuous attributes, plus
/// a test instance and a pool with missing values. The first socio
/// attribute is never missing, so every pair has a defined total.
pub fn random_mixed_case(rng: &mut impl Rng) -> (AttributeSchema, ChoiceInstance, Vec<ChoiceInstance>) {
    let mut attributes = Vec::new();
    let mut next = 0;
    let mut add = |group, kind, levels: usize, attributes: &mut Vec<Attribute>| {
        attributes.push(Attribute {
            name: format!("v{next}"),
            group,
            kind,
            unit: String::new(),
            levels: (0..levels).map(|l| format!("l{l}")).collect(),
            label: None,
            alternative: None,
        });
        next += 1;
    };
    let categorical = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.5) {
            AttributeKind::Ordinal
        } else {
            AttributeKind::Nominal
        }
    };
    for group in [AttributeGroup::Socio, AttributeGroup::TripCat, AttributeGroup::Additional] {
        let count = if group == AttributeGroup::Socio { rng.random_range(1..4) } else { rng.random_range(0..3) };
        for _ in 0..count {
            let kind = categorical(rng);
            let levels = rng.random_range(2..6);
            add(group, kind, levels, &mut attributes);
        }
    }
    for _ in 0..rng.random_range(0..4) {
        add(AttributeGroup::TripNum, AttributeKind::Continuous, 0, &mut attributes);
    }
    let schema = AttributeSchema {
        attributes,
        mode_labels: vec!["A".into(), "B".into()],
        availability_column: None,
        choice_column: "choice".into(),
        id_column: None,
        respondent_column: None,
    };
    let pool_len = rng.random_range(5..40);
    let make = |id: String, first: bool, rng: &mut dyn rand::RngCore| {
        let values = schema
            .attributes
            .iter()
            .enumerate()
            .map(|(i, attr)| {
                let v = if i > 0 && !first && rng.random_bool(0.2) {
                    Value::Missing
                } else if attr.kind == AttributeKind::Continuous {
                    // coarse grid so exact ties occur
                    Value::Number(f64::from(rng.random_range(0u8..12)) * 2.5)
                } else {
                    Value::Level(rng.random_range(0..attr.levels.len()))
                };
                (attr.name.clone(), v)
            })
            .collect();
        ChoiceInstance {
            id,
            respondent: String::new(),
            values,
            available_modes: vec!["A".into(), "B".into()],
            chosen_mode: "A".into(),
        }
    };
    let test = make("t".into(), false, rng);
    let pool = (0..pool_len).map(|i| make(format!("p{i:03}"), i == 0, rng)).collect();
    (schema, test, pool)
}
