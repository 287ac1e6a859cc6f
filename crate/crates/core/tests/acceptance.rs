//! Acceptance suite: one line per criterion, `PASS`, `FAIL` or `INFO`.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed. Exits non-zero when any gating check fails. Set
//! `UPDATE_GOLDENS=1` to rewrite the prompt goldens under `tests/golden`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use untangle_core::classifier::{gradient_check, ModelKind, TrainConfig};
use untangle_core::code_metrics::CodeMetrics;
use untangle_core::denoise::{
    build_histories, build_less_noisy, separability_report, Dataset, MethodHistory, PartitionCounts, PartitionSet,
};
use untangle_core::digest::sha256_hex;
use untangle_core::goldset::{build_automated_goldset, cohens_kappa, GoldsetConfig, SECONDS_PER_DAY};
use untangle_core::llm::{Gateway, MockProvider, ModelConfig, ProviderKind, ResponderEntry, ResponseCache};
use untangle_core::metrics::{classification_metrics, score, ConfusionMatrix};
use untangle_core::mining::{mine_repository, BugfixRules, CommitRecord, MethodChange, ParserConfig};
use untangle_core::prompt::{builtin_example_pair, default_instructions, render_prompt, PromptVariant};
use untangle_core::stats::{
    categorize_effect, cliffs_delta, rank_sum_normal_approx, rank_sum_test, EffectCategory, TestMethod,
};
use untangle_core::{Exec, Label, VerdictLabel};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent <= budget, || format!("took {spent:.2?}, budget {budget:?}"))
}

// ---------------------------------------------------------------------------
// Classification metrics

fn naive_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn metric_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let mut matrices: Vec<ConfusionMatrix> = (0..1000)
        .map(|k| {
            let mut cell = || if k % 10 == 0 && rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..60u64) };
            ConfusionMatrix { tp: cell(), fp: cell(), fn_: cell(), tn: cell() }
        })
        .collect();
    matrices[0] = ConfusionMatrix { tp: 17, fp: 0, fn_: 0, tn: 23 };
    matrices[1] = ConfusionMatrix { tp: 0, fp: 17, fn_: 23, tn: 0 };

    for cm in &matrices {
        let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
        let m = classification_metrics(cm, 0);
        let accuracy = naive_ratio(tp + tn, tp + fp + fn_ + tn);
        let precision = naive_ratio(tp, tp + fp);
        let recall = naive_ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { naive_ratio(2.0 * tp, 2.0 * tp + fp + fn_) };
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        let mcc = naive_ratio(tp * tn - fp * fn_, den);
        ensure(m.accuracy == accuracy && m.precision == precision && m.recall == recall, || {
            format!("{cm:?}: ratio mismatch")
        })?;
        ensure((m.f1 - f1).abs() <= 1e-12, || format!("{cm:?}: f1 {} vs {f1}", m.f1))?;
        ensure((m.mcc - mcc).abs() <= 1e-12, || format!("{cm:?}: mcc {} vs {mcc}", m.mcc))?;
    }
    ensure(classification_metrics(&matrices[0], 0).mcc == 1.0, || "perfect prediction is not mcc=1".into())?;
    ensure(classification_metrics(&matrices[1], 0).mcc == -1.0, || "inverted prediction is not mcc=-1".into())?;
    within(start, Duration::from_secs(1))?;
    Ok("1000 seeded matrices, mcc endpoints ±1".into())
}

// ---------------------------------------------------------------------------
// Rank-sum test

/// Two-sided p by enumerating every split of the pooled values.
fn enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
        xs.iter()
            .map(|x| {
                ys.iter()
                    .map(|y| {
                        if x > y {
                            1.0
                        } else if x == y {
                            0.5
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            })
            .sum()
    };
    let u = u_of(a, b);
    let (mut low, mut high, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    xs.push(*v)
                } else {
                    ys.push(*v)
                }
            }
            (xs, ys)
        };
        let uu = u_of(&xs, &ys);
        total += 1;
        low += (uu <= u) as u64;
        high += (uu >= u) as u64;
    }
    (2.0 * low.min(high) as f64 / total as f64).min(1.0)
}

fn rank_sum_exactness() -> Result<String, String> {
    let start = Instant::now();
    let mut cases = 0;
    for n1 in 1..=6usize {
        for n2 in 1..=6usize {
            let n = n1 + n2;
            // Tie-free samples are determined by which ranks fall in `a`.
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                let a: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i + 1) as f64).collect();
                let b: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| (i + 1) as f64).collect();
                let r = rank_sum_test(&a, &b).map_err(|e| e.to_string())?;
                ensure(r.method == TestMethod::Exact, || format!("{a:?} vs {b:?} not exact"))?;
                let oracle = enumeration_p(&a, &b);
                ensure(r.p_two_sided == oracle, || format!("{a:?} vs {b:?}: p {} vs {oracle}", r.p_two_sided))?;
                cases += 1;
            }
        }
    }
    let p = rank_sum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?.p_two_sided;
    ensure(p == 0.1, || format!("[1,2,3] vs [4,5,6]: p = {p}"))?;

    // Normal approximation against a permutation oracle at n = m = 30.
    let mut worst: f64 = 0.0;
    for (seed, shift) in [(1u64, 4.0), (2, 8.0), (3, 12.0)] {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let a: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..40.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..40.0) + shift).collect();
        let approx = rank_sum_normal_approx(&a, &b).map_err(|e| e.to_string())?;
        let perm = permutation_p(&a, &b, 100_000, seed);
        worst = worst.max((approx.p_two_sided - perm).abs());
        ensure((approx.p_two_sided - perm).abs() <= 0.01, || {
            format!("shift {shift}: normal p {} vs permutation p {perm}", approx.p_two_sided)
        })?;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{cases} exact cases match enumeration; p([1,2,3],[4,5,6]) = 0.1; normal vs permutation max |Δp| = {worst:.4}"
    ))
}

fn permutation_p(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> f64 {
    use rand::seq::SliceRandom;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    // Values are continuous draws, so ranks are tie-free.
    let ranks: Vec<f64> = pooled.iter().map(|v| (sorted.partition_point(|x| x < v) + 1) as f64).collect();
    let n1 = a.len();
    let mu = (n1 * (pooled.len() + 1)) as f64 / 2.0;
    let observed = (ranks[..n1].iter().sum::<f64>() - mu).abs();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed);
    let mut shuffled = ranks.clone();
    let mut extreme = 0usize;
    for _ in 0..rounds {
        shuffled.shuffle(&mut rng);
        if (shuffled[..n1].iter().sum::<f64>() - mu).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / rounds as f64
}

// ---------------------------------------------------------------------------
// Cliff's delta

fn cliffs_delta_oracle() -> Result<String, String> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for k in 0..500 {
        let n1 = rng.gen_range(1..40);
        let n2 = rng.gen_range(1..40);
        // Small integer ranges force plenty of ties.
        let hi = if k % 2 == 0 { 8 } else { 1000 };
        let a: Vec<f64> = (0..n1).map(|_| rng.gen_range(0..hi) as f64).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.gen_range(0..hi) as f64).collect();
        let mut d = 0i64;
        for x in &a {
            for y in &b {
                d += (x > y) as i64 - (x < y) as i64;
            }
        }
        let brute = d as f64 / (n1 * n2) as f64;
        let fast = cliffs_delta(&a, &b).map_err(|e| e.to_string())?.delta;
        ensure(fast == brute, || format!("sample {k}: {fast} vs {brute}"))?;
    }
    let boundaries = [
        (0.0, EffectCategory::Negligible),
        (0.146_999, EffectCategory::Negligible),
        (0.147, EffectCategory::Small),
        (0.329_999, EffectCategory::Small),
        (0.33, EffectCategory::Medium),
        (0.473_999, EffectCategory::Medium),
        (0.474, EffectCategory::Large),
        (1.0, EffectCategory::Large),
    ];
    for (d, want) in boundaries {
        for signed in [d, -d] {
            let got = categorize_effect(signed).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("delta {signed}: {got} instead of {want}"))?;
        }
    }
    Ok("500 samples equal the O(n·m) count; 0.147/0.33/0.474 boundaries".into())
}

// ---------------------------------------------------------------------------
// Gradient check

fn gradient_checks() -> Result<String, String> {
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    for seed in 0..20u64 {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(100 + seed);
        let x: Vec<f64> = (0..768).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = if seed % 2 == 0 { Label::Buggy } else { Label::NotBuggy };
        let cfg = TrainConfig { hidden_units: 32, seed, ..TrainConfig::default() };
        for (i, (kind, tol)) in [(ModelKind::Mlp, 1e-4), (ModelKind::Logistic, 1e-6)].into_iter().enumerate() {
            let err = gradient_check(kind, (&x, label), &cfg);
            worst[i] = worst[i].max(err);
            ensure(err <= tol, || format!("{kind:?} seed {seed}: relative error {err:e} > {tol:e}"))?;
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("20 samples; max relative error mlp {:.1e}, logistic {:.1e}", worst[0], worst[1]))
}

// ---------------------------------------------------------------------------
// Prompt goldens

const SENTINEL: &str = "SENTINEL-3f9c: stop dropping the retry counter";

fn golden_change() -> MethodChange {
    MethodChange {
        change_id: "golden".into(),
        commit: CommitRecord {
            commit_id: "0000000000000000000000000000000000000001".into(),
            message: SENTINEL.into(),
            author: String::new(),
            timestamp: 0,
            is_bugfix: true,
            files_touched: vec!["src/Retry.java".into()],
            first_parent: None,
        },
        file_path: "src/Retry.java".into(),
        method_signature: "Retry.next(int)".into(),
        before_source: None,
        after_source: None,
        diff_text: "--- before\n+++ after\n@@ -1,4 +1,4 @@\n     int next(int attempt) {\n-        return attempt;\n+        return attempt + 1;\n     }\n".into(),
        methods_in_commit: 2,
    }
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn prompt_goldens() -> Result<String, String> {
    let change = golden_change();
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    for v in PromptVariant::ALL {
        let prompt = render_prompt(v, &change, &default_instructions(v), Some(&builtin_example_pair()))
            .map_err(|e| e.to_string())?;
        let path = golden_dir().join(format!("{}.txt", v.name()));
        if update {
            std::fs::write(&path, &prompt).map_err(|e| e.to_string())?;
        }
        let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(prompt == golden, || format!("{v} differs from {}", path.display()))?;
        let hits = prompt.matches(SENTINEL).count();
        match v {
            PromptVariant::DiffOnly => {
                ensure(hits == 0, || format!("diff-only prompt contains the message {hits} times"))?
            }
            _ => ensure(hits == 1, || format!("{v} contains the message {hits} times"))?,
        }
    }
    Ok(format!(
        "5 variants byte-identical{}; diff-only omits the message",
        if update { " (goldens rewritten)" } else { "" }
    ))
}

// ---------------------------------------------------------------------------
// Kappa

fn kappa_checks() -> Result<String, String> {
    use Label::{Buggy as B, NotBuggy as N};
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, count) in [(B, B, 40), (B, N, 10), (N, B, 10), (N, N, 40)] {
        a.extend(std::iter::repeat_n(x, count));
        b.extend(std::iter::repeat_n(y, count));
    }
    let k = cohens_kappa(&a, &b).map_err(|e| e.to_string())?.kappa;
    ensure(k == 0.6, || format!("(40,10,10,40) gives {k}"))?;

    let alt: Vec<Label> = (0..20).map(|i| if i % 2 == 0 { B } else { N }).collect();
    let flipped: Vec<Label> = alt.iter().map(|l| l.flip()).collect();
    let k = cohens_kappa(&alt, &flipped).map_err(|e| e.to_string())?.kappa;
    ensure(k == -1.0, || format!("alternating table gives {k}"))?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for i in 0..100 {
        let n = rng.gen_range(2..200);
        let mut seq: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.4) { B } else { N }).collect();
        seq[0] = B;
        seq[1] = N;
        let k = cohens_kappa(&seq, &seq).map_err(|e| e.to_string())?.kappa;
        ensure(k == 1.0, || format!("sequence {i}: kappa(a,a) = {k}"))?;
    }
    Ok("(40,10,10,40) → 0.6, alternating → -1, kappa(a,a) = 1 on 100 sequences".into())
}

// ---------------------------------------------------------------------------
// End-to-end mock pipeline

fn oracle_gateway(items: &[(&MethodChange, Label)], variants: &[PromptVariant]) -> Result<Gateway, String> {
    let mut entries = Vec::new();
    for v in variants {
        for (change, label) in items {
            let prompt = render_prompt(*v, change, &default_instructions(*v), Some(&builtin_example_pair()))
                .map_err(|e| e.to_string())?;
            let response = if v.expects_reasoning() {
                format!("Step by step: the diff changes observable behaviour.\n{label}")
            } else {
                label.to_string()
            };
            entries.push(ResponderEntry { prompt_sha256: sha256_hex(&prompt), response });
        }
    }
    let cfg = ModelConfig { provider: ProviderKind::Mock, model_id: "oracle".into(), ..ModelConfig::default() };
    Ok(Gateway::with_provider(cfg, Box::new(MockProvider::new(entries)), Arc::new(ResponseCache::in_memory())))
}

fn ids(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| format!("calc:Calc.java::Calc.{s}")).collect()
}

fn end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let repo = common::fixture_repo(tmp.path());
    let mined = mine_repository(&repo, &BugfixRules::default(), &ParserConfig::default(), Exec::Parallel)
        .map_err(|e| e.to_string())?;
    ensure(mined.commits.len() >= 5, || format!("{} commits", mined.commits.len()))?;
    let changes = mined.changes;
    let find = |sig: &str, fix: bool| {
        changes
            .iter()
            .find(|c| c.method_signature == sig && c.commit.is_bugfix == fix && c.before_source.is_some())
            .ok_or_else(|| format!("no change of {sig}"))
    };
    let div = find("Calc.div(int,int)", true)?;
    let sub = find("Calc.sub(int,int)", true)?;
    let add = find("Calc.add(int,int)", true)?;
    let mul = find("Calc.mul(int,int)", false)?;
    ensure(div.methods_in_commit == 2 && add.methods_in_commit == 1, || "fixture commit shapes changed".into())?;

    let truth = [(div, Label::Buggy), (sub, Label::NotBuggy), (add, Label::Buggy), (mul, Label::NotBuggy)];
    let gateway = oracle_gateway(&truth, &PromptVariant::ALL)?;

    let histories = build_histories("calc", &changes, None);
    let variant = PromptVariant::FewShotCot;
    let partitions = build_less_noisy(
        &histories,
        |c| {
            render_prompt(variant, c, &default_instructions(variant), Some(&builtin_example_pair()))
                .ok()
                .and_then(|p| gateway.classify(&p, variant).ok())
                .map_or(VerdictLabel::Unparseable, |v| v.label)
        },
        730,
        Exec::Parallel,
    );
    let all = ["add(int,int)", "sub(int,int)", "mul(int,int)", "div(int,int)", "log(String)"];
    let expected = PartitionSet {
        noisy_buggy: ids(&["add(int,int)", "div(int,int)", "sub(int,int)"]),
        noisy_notbuggy: ids(&["log(String)", "mul(int,int)"]),
        less_noisy_buggy: ids(&["add(int,int)", "div(int,int)"]),
        less_noisy_notbuggy: ids(&["log(String)", "mul(int,int)", "sub(int,int)"]),
        quarantined: BTreeSet::new(),
        per_project_counts: BTreeMap::from([(
            "calc".to_string(),
            PartitionCounts {
                noisy_buggy: 3,
                noisy_notbuggy: 2,
                less_noisy_buggy: 2,
                less_noisy_notbuggy: 3,
                quarantined: 0,
            },
        )]),
        project_of: ids(&all).into_iter().map(|id| (id, "calc".to_string())).collect(),
        verdicts_requested: 2,
    };
    ensure(partitions == expected, || format!("partitions differ:\n{partitions:#?}"))?;
    partitions.check_invariants().map_err(|e| e.to_string())?;

    let mut f1s = Vec::new();
    for v in PromptVariant::ALL {
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (change, label) in &truth {
            let prompt = render_prompt(v, change, &default_instructions(v), Some(&builtin_example_pair()))
                .map_err(|e| e.to_string())?;
            let verdict = gateway.classify(&prompt, v).map_err(|e| e.to_string())?;
            preds.push(verdict.label.label().ok_or_else(|| format!("{v}: unparseable verdict"))?);
            truths.push(*label);
        }
        let (_, m) = score(&preds, &truths, 0).map_err(|e| e.to_string())?;
        ensure(m.f1 == 1.0, || format!("{v}: f1 = {}", m.f1))?;
        f1s.push(m.f1);
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "{} commits, {} method changes; exact partitions; F1 = 1.0 for all {} variants",
        mined.commits.len(),
        changes.len(),
        f1s.len()
    ))
}

// ---------------------------------------------------------------------------
// Separability restoration

fn synthetic_change(id: String, fix: bool) -> MethodChange {
    MethodChange {
        change_id: id,
        commit: CommitRecord {
            commit_id: String::new(),
            message: String::new(),
            author: String::new(),
            timestamp: 0,
            is_bugfix: fix,
            files_touched: Vec::new(),
            first_parent: None,
        },
        file_path: "S.java".into(),
        method_signature: String::new(),
        before_source: None,
        after_source: None,
        diff_text: "+x\n".into(),
        methods_in_commit: 2,
    }
}

/// One trial: returns (|delta| noisy, |delta| less noisy) on size.
fn separability_trial(noise: f64, seed: u64) -> Result<(f64, f64), String> {
    const FIXED: usize = 600;
    const CLEAN: usize = 600;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let noisy = (noise * FIXED as f64).round() as usize;
    let mut histories = Vec::new();
    let mut metrics = HashMap::new();
    let mut verdicts = HashMap::new();
    for i in 0..FIXED + CLEAN {
        // Truly buggy methods are larger on average; mislabeled ones and
        // never-fixed ones share the clean distribution.
        let truly_buggy = i < FIXED - noisy;
        let fixed = i < FIXED;
        let size = if truly_buggy { 30 + rng.gen_range(0..40u64) } else { 20 + rng.gen_range(0..40u64) };
        let method_id = format!("p:m{i}");
        let change_id = format!("c{i}");
        if fixed {
            let truth = if truly_buggy { VerdictLabel::Buggy } else { VerdictLabel::NotBuggy };
            let wrong = if truly_buggy { VerdictLabel::NotBuggy } else { VerdictLabel::Buggy };
            verdicts.insert(change_id.clone(), if rng.gen_bool(0.9) { truth } else { wrong });
        }
        histories.push(MethodHistory {
            method_id: method_id.clone(),
            project: "p".into(),
            first_version_source: None,
            age_days: 1000,
            changes: vec![synthetic_change(change_id, fixed)],
        });
        let s = size as f64;
        metrics.insert(
            method_id,
            CodeMetrics { size, readability: -s, mccabe: size / 10, fan_out: size / 5, mi: 100.0 - s },
        );
    }
    let partitions = build_less_noisy(&histories, |c| verdicts[&c.change_id], 730, Exec::Sequential);
    partitions.check_invariants().map_err(|e| e.to_string())?;
    let report = separability_report(&partitions, &metrics).map_err(|e| e.to_string())?;
    let delta = |d: Dataset| report.row("p", "size", d).map(|r| r.delta.abs()).ok_or_else(|| "missing row".to_string());
    Ok((delta(Dataset::Noisy)?, delta(Dataset::LessNoisy)?))
}

fn separability_restoration() -> Result<String, String> {
    let mut summary = Vec::new();
    for noise in [0.2, 0.4] {
        let mut wins = 0;
        let (mut sum_noisy, mut sum_clean) = (0.0, 0.0);
        for trial in 0..100u64 {
            let (noisy, clean) = separability_trial(noise, 1000 * (noise * 10.0) as u64 + trial)?;
            wins += (clean > noisy) as usize;
            sum_noisy += noisy;
            sum_clean += clean;
        }
        ensure(wins >= 95, || format!("noise {noise}: denoising helped in only {wins}/100 trials"))?;
        summary.push(format!(
            "noise {noise}: {wins}/100, mean |δ| {:.3} → {:.3}",
            sum_noisy / 100.0,
            sum_clean / 100.0
        ));
    }
    Ok(summary.join("; "))
}

// ---------------------------------------------------------------------------
// Gold-set rules

fn goldset_rules() -> Result<String, String> {
    let day = SECONDS_PER_DAY;
    let change = |id: &str, sig: &str, t: i64, fix: bool, n: usize, diff: &str| MethodChange {
        change_id: id.into(),
        commit: CommitRecord {
            commit_id: format!("commit-{id}"),
            message: if fix { "fix".into() } else { "work".into() },
            author: String::new(),
            timestamp: t * day,
            is_bugfix: fix,
            files_touched: Vec::new(),
            first_parent: None,
        },
        file_path: "A.java".into(),
        method_signature: sig.into(),
        before_source: Some("old".into()),
        after_source: Some("new".into()),
        diff_text: diff.into(),
        methods_in_commit: n,
    };
    let history = vec![
        change("a1", "A.a()", 0, false, 1, "+a1"),
        change("a2", "A.a()", 900, true, 1, "+a2 fix"), // single-method fix → Buggy
        change("b1", "A.b()", 0, false, 3, "+b1"),
        change("b2", "A.b()", 950, true, 2, "+b2 tangled"), // tangled fix: neither label
        change("c1", "A.c()", 10, false, 1, "+c1"),         // never fixed, old → NotBuggy
        change("c2", "A.c()", 400, false, 1, "+c2"),
        change("d1", "A.d()", 800, false, 1, "+d1"), // never fixed, too young
        change("e1", "A.e()", 960, true, 1, "+a2 fix"), // duplicate diff of a2 → dropped
        change("f1", "A.f()", 5, false, 1, "+f1"),   // never fixed, old → NotBuggy
        change("g1", "A.g()", 990, true, 1, "+g1 fix"), // single-method fix → Buggy
    ];
    let cfg = GoldsetConfig { notbuggy_cap: 100, seed: 1, min_age_days: 730, reference_time: Some(1000 * day) };
    let gold = build_automated_goldset(&history, &cfg).map_err(|e| e.to_string())?;
    let of = |label: Label| -> BTreeSet<&str> {
        gold.iter().filter(|r| r.label == label).map(|r| r.change.change_id.as_str()).collect()
    };
    let buggy = of(Label::Buggy);
    let clean = of(Label::NotBuggy);
    ensure(buggy == BTreeSet::from(["a2", "g1"]), || format!("Buggy = {buggy:?}"))?;
    ensure(clean == BTreeSet::from(["c2", "f1"]), || format!("NotBuggy = {clean:?}"))?;
    let diffs: BTreeSet<&str> = gold.iter().map(|r| r.change.diff_text.as_str()).collect();
    ensure(diffs.len() == gold.len(), || "duplicate diff survived".into())?;
    Ok(format!("{} Buggy, {} NotBuggy; tangled, young and duplicate changes excluded", buggy.len(), clean.len()))
}

// ---------------------------------------------------------------------------
// Live-API harness (informative)

fn live_report() -> Result<String, String> {
    use untangle_core::goldset::read_labeled_jsonl;
    use untangle_core::llm::{GEMINI_KEY_VAR, OPENAI_KEY_VAR};

    let Some(gold) = std::env::var_os("UNTANGLE_LIVE_GOLDSET") else {
        return Ok("skipped: set UNTANGLE_LIVE_GOLDSET and an API key to run".into());
    };
    let (provider, default_model) = if std::env::var_os(OPENAI_KEY_VAR).is_some() {
        (ProviderKind::OpenaiCompatible, "gpt-4o-mini")
    } else if std::env::var_os(GEMINI_KEY_VAR).is_some() {
        (ProviderKind::GeminiCompatible, "gemini-1.5-flash")
    } else {
        return Ok("skipped: no API key in the environment".into());
    };
    let model_id = std::env::var("UNTANGLE_LIVE_MODEL").unwrap_or_else(|_| default_model.to_string());
    let file = std::fs::File::open(&gold).map_err(|e| e.to_string())?;
    let labeled = read_labeled_jsonl(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { provider, model_id: model_id.clone(), ..ModelConfig::default() };
    let gateway = Gateway::new(cfg, Arc::new(ResponseCache::in_memory())).map_err(|e| e.to_string())?;

    println!("       | variant      | model | n | accuracy | precision | recall | f1 | mcc | unparseable |");
    for v in PromptVariant::ALL {
        let prompts: Vec<String> = labeled
            .iter()
            .map(|l| {
                render_prompt(v, &l.change, &default_instructions(v), Some(&builtin_example_pair())).unwrap_or_default()
            })
            .collect();
        let verdicts = gateway.classify_batch(&prompts, v, Exec::Parallel);
        let mut cm = ConfusionMatrix::default();
        let mut unparseable = 0;
        for (l, r) in labeled.iter().zip(verdicts) {
            match r.ok().and_then(|v| v.label.label()) {
                Some(p) => cm.record(p, l.label, Label::Buggy),
                None => unparseable += 1,
            }
        }
        let m = classification_metrics(&cm, unparseable);
        println!(
            "       | {:<12} | {model_id} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {unparseable} |",
            v.name(),
            labeled.len(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.mcc
        );
    }
    Ok(format!("{} items, model {model_id}; reference F1: 0.879 zero-shot, 0.883 hybrid, 0.906 LOO MLP", labeled.len()))
}

// ---------------------------------------------------------------------------

fn run(name: &str, check: Check) -> Result<String, String> {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(format!("panic: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {name:<34} {secs:>6.2}s  {detail}"),
        Err(reason) => println!("FAIL  {name:<34} {secs:>6.2}s  {reason}"),
    }
    outcome
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("metric oracle equivalence", metric_oracle),
        ("rank-sum exactness", rank_sum_exactness),
        ("cliff's delta", cliffs_delta_oracle),
        ("gradient check", gradient_checks),
        ("prompt goldens", prompt_goldens),
        ("kappa", kappa_checks),
        ("end-to-end mock pipeline", end_to_end),
        ("separability restoration", separability_restoration),
        ("gold-set rules", goldset_rules),
    ];
    let failed = checks.iter().filter(|(name, check)| run(name, *check).is_err()).count();

    match std::panic::catch_unwind(live_report) {
        Ok(Ok(detail)) => println!("INFO  {:<34} {:>6}   {detail}", "live API report", ""),
        Ok(Err(e)) => println!("INFO  {:<34} {:>6}   failed (not gating): {e}", "live API report", ""),
        Err(_) => println!("INFO  {:<34} {:>6}   panicked (not gating)", "live API report", ""),
    }
    println!("\nacceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
