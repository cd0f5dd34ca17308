//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicIsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcbench::analysis::{variance_decomposition, Aggregation, ExperimentCell, Factor};
use mcbench::dataset::fit_normalizer;
use mcbench::finetune::{build_training_corpus, mask_labels, IGNORE_INDEX};
use mcbench::gateway::{ChatBackend, ChatRequest, Completion, GatewayError, MockBackend};
use mcbench::metrics::{cross_entropy, evaluate_run, jsd, ShareDistribution, DEFAULT_EPSILON};
use mcbench::prompt::{PromptForge, PromptStyle, PromptTemplate};
use mcbench::reasoning::{esi, FactorLexicon};
use mcbench::runner::{run_campaign, ExperimentConfig, PreparedDataset, RunConfig, RunnerError};
use mcbench::similarity::{numeric_group_similarity, ShotType, SimilarityModel, SimilarityWeights};
use mcbench::synthetic;

mod common;
use common::{as_records, close, random_cell, random_mixed_case, reference_metrics, reference_similarity};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mcbench")
}

fn mcbench(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("mcbench {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for cell in 0..100 {
        let (c, truth, pred) = random_cell(&mut rng);
        let (records, truths, labels) = as_records(&truth, &pred, c);
        let got = evaluate_run(&records, &truths, &labels).map_err(|e| e.to_string())?;
        let want = reference_metrics(&truth, &pred, c, DEFAULT_EPSILON);
        let pairs = [
            ("accuracy", got.accuracy, want.accuracy),
            ("precision_macro", got.precision_macro, want.precision_macro),
            ("recall_macro", got.recall_macro, want.recall_macro),
            ("f1_macro", got.f1_macro, want.f1_macro),
            ("f1_weighted", got.f1_weighted, want.f1_weighted),
            ("dist_mae", got.dist_mae.unwrap_or(f64::NAN), want.dist_mae),
            ("jsd", got.jsd.unwrap_or(f64::NAN), want.jsd),
            ("cross_entropy", got.cross_entropy.unwrap_or(f64::NAN), want.cross_entropy),
        ];
        for (name, g, w) in pairs {
            ensure!(close(g, w), "cell {cell} (C={c}, N={}): {name} {g} vs reference {w}", truth.len());
        }
        ensure!(got.invalid_count == want.invalid, "cell {cell}: invalid count");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("100 cells within 1e-9 relative in {secs:.3} s"))
}

fn worked_similarity_example() -> Outcome {
    let near = numeric_group_similarity(&[0.81], &[0.80]).map_err(|e| e.to_string())?;
    let far = numeric_group_similarity(&[0.81], &[0.20]).map_err(|e| e.to_string())?;
    let far_rounded = numeric_group_similarity(&[0.80], &[0.20]).map_err(|e| e.to_string())?;
    ensure!((near - 0.99).abs() <= 0.005, "near pair {near}");
    ensure!((far - 0.625).abs() <= 0.005, "far pair {far}");
    ensure!((far_rounded - 0.625).abs() < 1e-12, "distance 0.60 gives {far_rounded}");
    Ok(format!("{near:.4} and {far:.4} (distance 0.60 gives {far_rounded:.4})"))
}

fn matrix_counts(dir: &Path) -> Outcome {
    let mut text = String::from("[run]\noutput_dir = \"results\"\n");
    for d in 0..3 {
        text += &format!("[[datasets]]\nname = \"ds{d}\"\npath = \"ds{d}.csv\"\nschema_file = \"schema.toml\"\n");
    }
    for m in 0..11 {
        text += &format!("[[endpoints]]\nname = \"model{m:02}\"\nbase_url = \"http://127.0.0.1:9/v1\"\n");
    }
    let list = |p: &str, n: usize, w: usize| (0..n).map(|i| format!("\"{p}{i:0w$}\"")).collect::<Vec<_>>().join(", ");
    text += &format!(
        "[matrix]\nmodels = [{}]\ndatasets = [{}]\nshots = [\"zeroshot\", \"fewshot_random\", \"fewshot_targeted\"]\n\
         styles = [\"direct\", \"cot_react\"]\ntemperatures = [0.5, 1.0]\n",
        list("model", 11, 2),
        list("ds", 3, 1)
    );
    let path = dir.join("plan.toml");
    std::fs::write(&path, text).map_err(|e| e.to_string())?;
    let out = mcbench(&["plan", "--config", path.to_str().unwrap()])?;
    ensure!(out.contains("configurations: 396\n"), "plan output:\n{out}");
    ensure!(out.contains("planned calls: 79200\n"), "plan output:\n{out}");
    Ok("396 configurations, 79200 planned calls".into())
}

fn random_distribution(rng: &mut impl Rng, c: usize) -> ShareDistribution {
    loop {
        let counts: Vec<u64> = (0..c).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..50) }).collect();
        if let Ok(d) = ShareDistribution::from_counts(&counts) {
            return d;
        }
    }
}

fn jsd_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let ln2 = std::f64::consts::LN_2;
    let mut worst_asym: f64 = 0.0;
    for i in 0..1000 {
        let c = rng.random_range(2..8);
        let p = random_distribution(&mut rng, c);
        let q = random_distribution(&mut rng, c);
        let pq = jsd(&p, &q, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
        let qp = jsd(&q, &p, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
        worst_asym = worst_asym.max((pq - qp).abs());
        ensure!((pq - qp).abs() <= 1e-12, "pair {i}: asymmetry {}", (pq - qp).abs());
        ensure!((0.0..=ln2 + 1e-12).contains(&pq), "pair {i}: jsd {pq} out of range");
        ensure!(jsd(&p, &p, DEFAULT_EPSILON).unwrap() == 0.0, "pair {i}: jsd(p, p) != 0");
    }
    let a = ShareDistribution::new(vec![1.0, 0.0]).unwrap();
    let b = ShareDistribution::new(vec![0.0, 1.0]).unwrap();
    let disjoint = jsd(&a, &b, DEFAULT_EPSILON).unwrap();
    ensure!((disjoint - ln2).abs() <= 1e-6, "disjoint supports give {disjoint}");
    Ok(format!("1000 pairs, max asymmetry {worst_asym:.1e}; disjoint pair {disjoint:.9} vs ln 2"))
}

fn smoothing_spike() -> Outcome {
    // the class holding half of the truth is never predicted
    let truth: Vec<usize> = (0..200).map(|i| i % 2).collect();
    let pred: Vec<Option<usize>> = vec![Some(0); 200];
    let (records, truths, labels) = as_records(&truth, &pred, 2);
    let ce = evaluate_run(&records, &truths, &labels).unwrap().cross_entropy.unwrap();
    ensure!(ce.is_finite() && ce > 9.0, "cross-entropy {ce}");

    // the bound -p' ln q' holds for every zero-predicted present class
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for i in 0..500 {
        let c = rng.random_range(2..7);
        let p = random_distribution(&mut rng, c);
        let Some(zero) = (0..c).find(|&k| p.probs()[k] > 0.0) else { continue };
        let counts: Vec<u64> = (0..c).map(|k| if k == zero { 0 } else { rng.random_range(1..30) }).collect();
        let q = ShareDistribution::from_counts(&counts).unwrap();
        let v = cross_entropy(&p, &q, DEFAULT_EPSILON).unwrap();
        let denom = 1.0 + c as f64 * DEFAULT_EPSILON;
        let bound = -((p.probs()[zero] + DEFAULT_EPSILON) / denom) * (DEFAULT_EPSILON / denom).ln();
        ensure!(v.is_finite() && v >= bound, "case {i}: CE {v} below {bound}");
    }
    Ok(format!("half-share class unpredicted gives CE {ce:.3}; -p ln eps bound holds on 500 cells"))
}

fn targeted_sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut with_ties = 0;
    for case in 0..1000 {
        let (schema, test, pool) = random_mixed_case(&mut rng);
        let normalizer = fit_normalizer(&pool, &schema).map_err(|e| e.to_string())?;
        let w: [f64; 4] = std::array::from_fn(|_| rng.random_range(1u32..100).into());
        let total: f64 = w.iter().sum();
        let w = w.map(|x| x / total);
        let weights = SimilarityWeights::new(w[0], w[1], w[2], w[3]).map_err(|e| e.to_string())?;
        let w = [weights.socio, weights.trip_num, weights.trip_cat, weights.additional];
        let k = rng.random_range(1..=pool.len().min(8));
        let picked = SimilarityModel::new(&schema, weights, &normalizer)
            .select_targeted(&test, &pool, k)
            .map_err(|e| format!("case {case}: {e}"))?;

        let mut oracle: Vec<(usize, f64)> =
            pool.iter().enumerate().map(|(i, p)| (i, reference_similarity(&schema, w, &pool, &test, p))).collect();
        oracle.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        ensure!(picked.len() == k, "case {case}: {} picked, k = {k}", picked.len());
        for (rank, (got, want)) in picked.iter().zip(&oracle).enumerate() {
            ensure!(
                (got.similarity.total - want.1).abs() <= 1e-12,
                "case {case} rank {rank}: total {} vs oracle {}",
                got.similarity.total,
                want.1
            );
            // among candidates tied with the oracle's pick, the earliest unused one wins
            let tied: Vec<usize> =
                oracle.iter().filter(|(_, s)| (s - want.1).abs() <= 1e-12).map(|(i, _)| *i).collect();
            ensure!(tied.contains(&got.index), "case {case} rank {rank}: index {} not among {tied:?}", got.index);
            if tied.len() > 1 {
                with_ties += 1;
            }
        }
        let mut seen = std::collections::HashSet::new();
        ensure!(picked.iter().all(|s| seen.insert(s.index)), "case {case}: repeated example");
    }
    Ok(format!("1000 mixed-schema cases agree ({with_ties} selections inside tie groups)"))
}

/// Synthetic mock answers until a shared budget of calls runs out, then
/// reports an outage.
struct FailAfter {
    inner: MockBackend,
    budget: Arc<AtomicIsize>,
}

impl ChatBackend for FailAfter {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, GatewayError> {
        if self.budget.fetch_sub(1, Ordering::SeqCst) <= 0 {
            return Err(GatewayError::Transport { attempts: 1, message: "simulated outage".into() });
        }
        self.inner.complete(request)
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
        }
    }
    out
}

fn end_to_end(root: &Path) -> Outcome {
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| root.join(d)).collect();
    for d in &dirs {
        mcbench(&["demo-data", "--out", d.to_str().unwrap()])?;
    }
    let config_a = dirs[0].join("mcbench.toml");

    let start = Instant::now();
    let out = mcbench(&["run", "--config", config_a.to_str().unwrap(), "--mock"])?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(out.lines().count() == 24, "expected 24 cells, got:\n{out}");
    ensure!(out.lines().all(|l| l.contains(" complete ")), "not all cells complete:\n{out}");
    ensure!(secs < 60.0, "campaign took {secs:.1} s");

    let config_b = RunConfig::load(dirs[1].join("mcbench.toml")).map_err(|e| e.to_string())?;
    run_campaign(&config_b, &[], Some(1), &mcbench::runner::mock_factory(config_b.run.seed)).map_err(|e| e.to_string())?;

    // interrupted: the endpoint dies after 1,700 calls, then a torn write
    let config_c = RunConfig::load(dirs[2].join("mcbench.toml")).map_err(|e| e.to_string())?;
    let budget = Arc::new(AtomicIsize::new(1700));
    let seed = config_c.run.seed;
    let failing = |_: &ExperimentConfig, data: &PreparedDataset| -> Result<Box<dyn ChatBackend>, RunnerError> {
        Ok(Box::new(FailAfter {
            inner: MockBackend::synthetic(data.truths().into_iter().collect(), seed),
            budget: budget.clone(),
        }))
    };
    let partial = run_campaign(&config_c, &[], Some(3), &failing).map_err(|e| e.to_string())?;
    let errored = partial.iter().filter(|s| s.error.is_some()).count();
    ensure!(errored > 0, "the simulated outage did not interrupt any cell");
    let torn = partial
        .iter()
        .find(|s| s.persisted > 0 && s.error.is_some())
        .map(|s| dirs[2].join("results").join(format!("{}.records.jsonl", s.stem)))
        .ok_or("no partially written cell")?;
    use std::io::Write;
    std::fs::OpenOptions::new()
        .append(true)
        .open(&torn)
        .and_then(|mut f| f.write_all(b"{\"agent_id\":\"r01"))
        .map_err(|e| e.to_string())?;
    mcbench(&["run", "--config", dirs[2].join("mcbench.toml").to_str().unwrap(), "--mock"])?;

    let a = tree(&dirs[0].join("results"));
    ensure!(a.len() == 48, "expected 24 record files and 24 reports, found {}", a.len());
    ensure!(a == tree(&dirs[1].join("results")), "second run differs from the first");
    ensure!(a == tree(&dirs[2].join("results")), "resumed store differs from the uninterrupted one");
    Ok(format!("24 cells x 200 in {secs:.1} s; rerun identical; resume after {errored} interrupted cells identical"))
}

fn cells_2x2(values: [f64; 4]) -> Vec<ExperimentCell> {
    let mut cells = Vec::new();
    for (i, (model, style)) in
        [("a", PromptStyle::Direct), ("a", PromptStyle::CotReact), ("b", PromptStyle::Direct), ("b", PromptStyle::CotReact)]
            .into_iter()
            .enumerate()
    {
        cells.push(ExperimentCell {
            model: model.into(),
            dataset: "d".into(),
            shot: ShotType::Zeroshot,
            style,
            temperature: 0.5,
            f1_weighted: values[i],
        });
    }
    cells
}

fn anova_oracle() -> Outcome {
    let v = variance_decomposition(&cells_2x2([0.0, 1.0, 2.0, 3.0]), &[Factor::Model, Factor::Style], Aggregation::CellMeans)
        .map_err(|e| e.to_string())?;
    let ss: Vec<f64> = v.factors.iter().map(|f| f.sum_of_squares).collect();
    let shares: Vec<f64> = v.factors.iter().map(|f| f.share).collect();
    ensure!(ss == [4.0, 1.0], "sums of squares {ss:?}");
    ensure!(shares == [0.8, 0.2], "shares {shares:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for design in 0..100 {
        let models = rng.random_range(2..6);
        let temps = [0.25, 0.5, 1.0, 1.5];
        let n_temps = rng.random_range(1..=4);
        let reps = rng.random_range(1..4);
        let mut cells = Vec::new();
        for m in 0..models {
            for shot in ShotType::ALL {
                for style in [PromptStyle::Direct, PromptStyle::CotReact] {
                    for &temperature in &temps[..n_temps] {
                        for _ in 0..reps {
                            cells.push(ExperimentCell {
                                model: format!("m{m}"),
                                dataset: "d".into(),
                                shot,
                                style,
                                temperature,
                                f1_weighted: rng.random_range(0.0..1.0),
                            });
                        }
                    }
                }
            }
        }
        for agg in [Aggregation::CellMeans, Aggregation::Pooled] {
            let v = variance_decomposition(&cells, &Factor::WITHIN_DATASET, agg).map_err(|e| e.to_string())?;
            let sum: f64 = v.factors.iter().map(|f| f.share).sum();
            ensure!((sum - 1.0).abs() <= 1e-12, "design {design}: shares sum to {sum}");
        }
    }
    Ok("2x2 design gives SS (4, 1) and shares (0.8, 0.2); 100 random designs sum to 1".into())
}

fn esi_checks() -> Outcome {
    let lex = FactorLexicon::default();
    let empty = esi("", &lex, false).value;
    let partial = esi("The train saves time despite the higher cost", &lex, false);
    let full = esi("Time, cost, comfort, convenience and frequency all matter.", &lex, false).value;
    ensure!(empty == 0.0, "empty text gives {empty}");
    ensure!(partial.value == 0.4 && partial.hits == ["time", "cost"], "partial example gives {partial:?}");
    ensure!(full == 1.0, "all factors give {full}");

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let filler = ["the", "train", "is", "fast", "but", "I", "prefer", "my", "car", "today", "and"];
    for case in 0..1000 {
        let mut words: Vec<String> = (0..rng.random_range(0..15)).map(|_| filler[rng.random_range(0..filler.len())].into()).collect();
        let base = words.join(" ");
        let before = esi(&base, &lex, false).value;
        let factor = &lex.factors()[rng.random_range(0..lex.len())];
        let at = rng.random_range(0..=words.len());
        words.insert(at, factor.to_uppercase());
        let inserted = words.join(" ");
        for tb in [false, true] {
            let after = esi(&inserted, &lex, tb);
            ensure!(after.value >= esi(&base, &lex, tb).value, "case {case}: insertion lowered ESI");
            ensure!(after.hits.contains(factor), "case {case}: inserted `{factor}` not found");
            let mixed: String = inserted
                .chars()
                .map(|c| if rng.random_bool(0.5) { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
                .collect();
            ensure!(esi(&mixed, &lex, tb) == after, "case {case}: case changed the score");
        }
        ensure!(esi(&inserted, &lex, false).value >= before, "case {case}: not monotone");
    }
    Ok("forced examples 0, 0.4, 1.0; 1000 random insertions monotone and case-invariant".into())
}

fn masked_loss(logits: &[Vec<f64>], labels: &[i64]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, &label) in logits.iter().zip(labels) {
        if label == IGNORE_INDEX {
            continue;
        }
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - row[label as usize];
        count += 1;
    }
    total / count as f64
}

fn mask_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..1000 {
        let len = rng.random_range(2..64);
        let tokens: Vec<i64> = (0..len).map(|_| rng.random_range(0..50)).collect();
        let prompt_len = rng.random_range(1..len);
        let m = mask_labels(&tokens, prompt_len).map_err(|e| e.to_string())?;
        let mut logits: Vec<Vec<f64>> = (0..len).map(|_| (0..50).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let before = masked_loss(&logits, &m.labels);
        // scrambling prompt-position logits must leave the loss untouched
        for row in &mut logits[..prompt_len] {
            for v in row.iter_mut() {
                *v = rng.random_range(-40.0..40.0);
            }
        }
        ensure!(masked_loss(&logits, &m.labels) == before, "case {case}: prompt positions contribute to the loss");
        ensure!(m.labels[prompt_len..] == tokens[prompt_len..], "case {case}: answer labels altered");
    }

    let (schema, data) = synthetic::swissmetro_like(120, 6, 9);
    let prepared = PreparedDataset::new("sm", schema, &data, 100, 60, 3, Default::default()).map_err(|e| e.to_string())?;
    let template = PromptTemplate::default();
    let forge = PromptForge::new(&prepared.schema, &template, 5);
    let corpus = build_training_corpus(&prepared.split.train, &prepared.split.test, &forge, 3).map_err(|e| e.to_string())?;
    let mut leaks = 0;
    for ex in &corpus.examples {
        let answer = template.answer_line(&ex.selected_mode);
        // character-level tokenization of instruction followed by answer
        let tokens: Vec<i64> = ex.instruction.chars().chain(answer.chars()).map(|c| c as i64).collect();
        let prompt_len = ex.instruction.chars().count();
        let m = mask_labels(&tokens, prompt_len).map_err(|e| e.to_string())?;
        leaks += m.labels[..prompt_len].iter().filter(|&&l| l != IGNORE_INDEX).count();
        if ex.instruction.contains(&answer) {
            leaks += 1;
        }
    }
    ensure!(leaks == 0, "{leaks} answer labels inside instructions");
    Ok(format!("1000 random masks exact; {} corpus examples scanned, 0 leaks", corpus.examples.len()))
}

fn non_reproducible_declared(root: &Path) -> Outcome {
    let readme_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let readme = std::fs::read_to_string(&readme_path).map_err(|e| format!("README.md: {e}"))?;
    for needle in ["0.6845", "0.000245", "not desk-reproducible"] {
        ensure!(readme.contains(needle), "README.md does not mention `{needle}`");
    }

    let table = root.join("user_runs.csv");
    let mut csv = String::from("model,dataset,shot,style,temperature,f1_weighted,notes\n");
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for model in ["alpha", "beta", "gamma"] {
        for shot in ShotType::ALL {
            for style in ["direct", "cot_react"] {
                for t in ["0.5", "1.0"] {
                    let f1: f64 = rng.random_range(0.3..0.7);
                    csv += &format!("{model},survey,{},{style},{t},{f1:.4},user supplied\n", shot.as_str());
                }
            }
        }
    }
    std::fs::write(&table, csv).map_err(|e| e.to_string())?;
    let out = root.join("analysis");
    mcbench(&["analyze", "--table", table.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    let md = std::fs::read_to_string(out.join("comparison.md")).map_err(|e| e.to_string())?;
    for needle in ["Top Mean", "Top Peak", "Tightest IQR", "| Zero-Shot |", "| Random Few-Shot |", "| Targeted Few-Shot |"] {
        ensure!(md.contains(needle), "comparison table lacks `{needle}`:\n{md}");
    }
    Ok("README declares the headline figures out of reach; comparison table emitted from user runs".into())
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Check)> = vec![
        ("metric oracle suite", Box::new(metric_oracle)),
        ("worked similarity example", Box::new(worked_similarity_example)),
        ("matrix counts", Box::new(|| matrix_counts(root.path()))),
        ("JSD properties", Box::new(jsd_properties)),
        ("smoothing and cross-entropy", Box::new(smoothing_spike)),
        ("targeted sampler equivalence", Box::new(targeted_sampler)),
        ("end-to-end determinism", Box::new(|| end_to_end(root.path()))),
        ("ANOVA oracle", Box::new(anova_oracle)),
        ("ESI", Box::new(esi_checks)),
        ("mask correctness", Box::new(mask_checks)),
        ("non-reproducible results declared", Box::new(|| non_reproducible_declared(root.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
