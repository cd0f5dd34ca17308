//! Seeded generator of Swissmetro-like stated-preference data for demos
//! and tests. Choices follow a multinomial logit with Gumbel noise, so the
//! attributes carry real signal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Attribute, AttributeGroup, AttributeKind, AttributeSchema, ChoiceInstance, Value};

fn attr(
    name: &str,
    label: &str,
    group: AttributeGroup,
    kind: AttributeKind,
    levels: &[&str],
    unit: &str,
    alternative: Option<&str>,
) -> Attribute {
    Attribute {
        name: name.into(),
        group,
        kind,
        unit: unit.into(),
        levels: levels.iter().map(|s| s.to_string()).collect(),
        label: Some(label.into()),
        alternative: alternative.map(Into::into),
    }
}

pub fn swissmetro_like_schema() -> AttributeSchema {
    use AttributeGroup::*;
    use AttributeKind::*;
    let num = |name: &str, label: &str, unit: &str, alt: &str| attr(name, label, TripNum, Continuous, &[], unit, Some(alt));
    AttributeSchema {
        attributes: vec![
            attr("age", "Age", Socio, Ordinal, &["under 25", "25-39", "40-54", "55-65", "over 65"], "", None),
            attr("income", "Annual income", Socio, Ordinal, &["under 50k", "50k-100k", "over 100k"], "", None),
            attr("gender", "Gender", Socio, Nominal, &["female", "male"], "", None),
            attr("ga", "Annual season ticket", Socio, Nominal, &["no", "yes"], "", None),
            attr("purpose", "Trip purpose", TripCat, Nominal, &["commuter", "shopping", "business", "leisure"], "", None),
            attr("luggage", "Luggage", TripCat, Ordinal, &["none", "one piece", "several pieces"], "", None),
            num("train_tt", "Travel time", "min", "TRAIN"),
            num("train_co", "Cost", "CHF", "TRAIN"),
            num("train_he", "Headway", "min", "TRAIN"),
            num("sm_tt", "Travel time", "min", "SM"),
            num("sm_co", "Cost", "CHF", "SM"),
            num("sm_he", "Headway", "min", "SM"),
            num("car_tt", "Travel time", "min", "CAR"),
            num("car_co", "Cost", "CHF", "CAR"),
            attr("first_class", "Travels first class", Additional, Nominal, &["no", "yes"], "", None),
            attr("who_pays", "Who pays", Additional, Nominal, &["self", "employer", "shared"], "", None),
        ],
        mode_labels: vec!["TRAIN".into(), "SM".into(), "CAR".into()],
        availability_column: Some("available".into()),
        choice_column: "choice".into(),
        id_column: Some("id".into()),
        respondent_column: Some("respondent".into()),
    }
}

fn gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(1e-12..1.0);
    -(-u.ln()).ln()
}

/// `n_respondents × scenarios` instances. Sociodemographics are constant
/// per respondent; about 5% of income values are missing.
pub fn swissmetro_like(n_respondents: usize, scenarios: usize, seed: u64) -> (AttributeSchema, Vec<ChoiceInstance>) {
    let schema = swissmetro_like_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_respondents * scenarios);
    for r in 0..n_respondents {
        let respondent = format!("r{r:04}");
        let age = rng.random_range(0..5usize);
        let income = rng.random_range(0..3usize);
        let income_missing = rng.random_bool(0.05);
        let gender = rng.random_range(0..2usize);
        let ga = rng.random_bool(0.25);
        let has_car = rng.random_bool(0.7);
        let purpose = rng.random_range(0..4usize);
        let first_class = rng.random_bool(0.2 + 0.2 * income as f64);
        let who_pays = if purpose == 2 { rng.random_range(1..3usize) } else { 0 };
        let base_tt: f64 = rng.random_range(40.0..240.0);
        let base_co: f64 = base_tt * rng.random_range(0.4..0.9);

        for s in 0..scenarios {
            let luggage = rng.random_range(0..3usize);
            let factor = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo..hi);
            let train_tt = (base_tt * factor(&mut rng, 0.8, 1.2)).round();
            let sm_tt = (base_tt * factor(&mut rng, 0.4, 0.8)).round();
            let car_tt = (base_tt * factor(&mut rng, 0.7, 1.3)).round();
            let train_co = if ga { 0.0 } else { (base_co * factor(&mut rng, 0.8, 1.2)).round() };
            let sm_co = if ga { 0.0 } else { (base_co * factor(&mut rng, 1.0, 1.5)).round() };
            let car_co = (base_co * factor(&mut rng, 0.6, 1.1)).round();
            let train_he = [30.0, 60.0, 120.0][rng.random_range(0..3usize)];
            let sm_he = [10.0, 20.0, 30.0][rng.random_range(0..3usize)];

            let price_weight = if who_pays > 0 { 0.3 } else { 1.0 } * (1.3 - 0.3 * income as f64);
            let mut utilities = vec![
                ("TRAIN", 0.0 - 0.02 * train_tt - 0.03 * price_weight * train_co - 0.006 * train_he + 0.4 * first_class as u8 as f64),
                ("SM", 0.3 - 0.02 * sm_tt - 0.03 * price_weight * sm_co - 0.01 * sm_he),
            ];
            if has_car {
                utilities.push(("CAR", 0.5 - 0.02 * car_tt - 0.03 * price_weight * car_co + 0.4 * luggage as f64));
            }
            let chosen = utilities
                .iter()
                .map(|(m, u)| (*m, u + gumbel(&mut rng)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least two modes")
                .0;

            let mut values = BTreeMap::new();
            values.insert("age".to_string(), Value::Level(age));
            values.insert(
                "income".to_string(),
                if income_missing { Value::Missing } else { Value::Level(income) },
            );
            values.insert("gender".to_string(), Value::Level(gender));
            values.insert("ga".to_string(), Value::Level(ga as usize));
            values.insert("purpose".to_string(), Value::Level(purpose));
            values.insert("luggage".to_string(), Value::Level(luggage));
            for (name, v) in [
                ("train_tt", train_tt),
                ("train_co", train_co),
                ("train_he", train_he),
                ("sm_tt", sm_tt),
                ("sm_co", sm_co),
                ("sm_he", sm_he),
            ] {
                values.insert(name.to_string(), Value::Number(v));
            }
            let (car_tt_v, car_co_v) = if has_car {
                (Value::Number(car_tt), Value::Number(car_co))
            } else {
                (Value::Missing, Value::Missing)
            };
            values.insert("car_tt".to_string(), car_tt_v);
            values.insert("car_co".to_string(), car_co_v);
            values.insert("first_class".to_string(), Value::Level(first_class as usize));
            values.insert("who_pays".to_string(), Value::Level(who_pays));

            let mut available_modes = vec!["TRAIN".to_string(), "SM".to_string()];
            if has_car {
                available_modes.push("CAR".to_string());
            }
            data.push(ChoiceInstance {
                id: format!("{respondent}-{s:02}"),
                respondent: respondent.clone(),
                values,
                available_modes,
                chosen_mode: chosen.to_string(),
            });
        }
    }
    (schema, data)
}
