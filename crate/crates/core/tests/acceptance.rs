//! Release gate: one end-to-end check per acceptance criterion. Each
//! check prints a single PASS/FAIL line (visible with `--nocapture`);
//! the test fails if any criterion fails.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamkb::candidates::{embedding_match, merge, string_match, temporal_hyp};
use streamkb::config::Config;
use streamkb::detector::{MentionKind, Tagger};
use streamkb::disambiguator::{output, DisambiguationUnit};
use streamkb::encoder::{HashEncoder, MentionEncoder, NeuralEncoder, WordLevelEncoder};
use streamkb::engine::{Engine, LinkCase};
use streamkb::generator::{
    build_default_ontology, build_default_pool, generate_stream, InstancePool, Setting,
};
use streamkb::harness::{
    exhaustive_matched_count, rb_baseline, run_longstream, run_rereading, run_stream,
    split_supervision, PurityMap,
};
use streamkb::memory::{MemoryState, MentionKey};
use streamkb::nn::Flat;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Gate {
        Gate { failures: Vec::new() }
    }

    fn check(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:2} ({name}): {verdict} [{detail}]");
        if !pass {
            self.failures.push(format!("criterion {id} ({name}): {detail}"));
        }
    }
}

fn dot(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn cos_oracle(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Criterion 1: every scoring formula matches an independent
/// reimplementation on randomized states.
fn formula_oracles(gate: &mut Gate) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10); // instances
        let m = rng.gen_range(1..=25); // stored mentions
        let dim = rng.gen_range(2..=8);
        let window = rng.gen_range(1..=10);
        let mut state = MemoryState::new(window, -6.0);
        for _ in 0..n {
            state.add_instance();
        }
        for i in 0..m {
            let emb = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            state.register_mention(MentionKey::new(&format!("s{i}")), emb).unwrap();
            for y in 0..n {
                state.set_raw_score(i, y, rng.gen_range(-8.0..8.0));
            }
        }
        // recent-instance buffer and its shadow
        let mut shadow = Vec::new();
        for _ in 0..rng.gen_range(0..=2 * window) {
            let y = rng.gen_range(0..n);
            state.record_recent(y).unwrap();
            shadow.push(y);
            if shadow.len() > window {
                shadow.remove(0);
            }
        }

        // string match: sigmoid of the activation row
        let probe = rng.gen_range(0..m);
        let p_z = string_match(&MentionKey::new(&format!("s{probe}")), &state).unwrap();
        for y in 0..n {
            worst = worst.max((p_z[y] - sig(state.raw_score(probe, y))).abs());
        }

        // embedding match: top-k shifted-cosine mixture of activated rows
        let k = rng.gen_range(1..=6);
        let query = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
        let p_e = embedding_match(&query, &state, k);
        let mut cosines: Vec<f64> =
            (0..m).map(|i| cos_oracle(&query, state.embedding_at(i))).collect();
        if m > k {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                cosines[b].partial_cmp(&cosines[a]).unwrap().then(a.cmp(&b))
            });
            for &i in &order[k..] {
                cosines[i] = -1.0;
            }
        }
        let denom: f64 = cosines.iter().map(|c| c + 1.0).sum();
        let mut expected = vec![0.0; n];
        if denom > 0.0 {
            for (i, c) in cosines.iter().enumerate() {
                for (y, e) in expected.iter_mut().enumerate() {
                    *e += (c + 1.0) / denom * sig(state.raw_score(i, y));
                }
            }
        }
        for y in 0..n {
            worst = worst.max((p_e[y] - expected[y]).abs());
        }

        // temporal hypothesis: occurrence counts over max count
        let p_t = temporal_hyp(&state);
        let mut counts = vec![0usize; n];
        for &y in &shadow {
            counts[y] += 1;
        }
        let max = counts.iter().copied().max().unwrap();
        for y in 0..n {
            let e = if max == 0 { 0.0 } else { counts[y] as f64 / max as f64 };
            worst = worst.max((p_t[y] - e).abs());
        }

        // merge
        let gamma = rng.gen_range(0.0..1.0);
        let p = merge(&p_z, &p_e, &p_t, gamma).unwrap();
        for y in 0..n {
            let e = (1.0 - gamma) * (p_z[y] + (1.0 - p_z[y]) * p_e[y]) + gamma * p_t[y];
            worst = worst.max((p[y] - e).abs());
        }

        // unit response: half-shifted max cosine over centroids
        let mut unit = DisambiguationUnit::new(rng.gen_range(1..=8));
        for _ in 0..rng.gen_range(0..=8) {
            unit.allocate(&Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0)));
        }
        let ctx = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
        let expected_d = unit
            .centroids
            .iter()
            .map(|w| 0.5 + 0.5 * cos_oracle(&ctx, w))
            .fold(f64::NEG_INFINITY, f64::max);
        if !unit.centroids.is_empty() {
            worst = worst.max((unit.response(&ctx) - expected_d).abs());
        }

        // gated output
        let tau_r = rng.gen_range(0.0..0.5);
        let eta = rng.gen_range(0.0..1.0);
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let o = output(&p, |i| d[i], tau_r, eta);
        for y in 0..n {
            let e = if p[y] > tau_r { eta * p[y] + (1.0 - eta) * d[y] } else { 0.0 };
            worst = worst.max((o[y] - e).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    gate.check(
        1,
        "formula oracles",
        worst <= 1e-12 && elapsed < 10.0,
        format!("max abs deviation {worst:.2e}, {elapsed:.1}s"),
    );
}

/// Criterion 2: all externally visible scores stay in [0, 1] under a long
/// randomized operation sequence.
fn score_bounds(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let enc = HashEncoder::new(16);
    let mut engine = Engine::new(Config::default());
    let surfaces: Vec<String> = (0..100).map(|i| format!("name{i} x{}", i % 7)).collect();
    let mut violations = 0usize;
    let ops = 100_000usize;
    for step in 0..ops {
        if step % 977 == 0 {
            engine.story_boundary();
        }
        let kind =
            if rng.gen_bool(0.7) { MentionKind::Entity } else { MentionKind::Relation };
        let s = &surfaces[rng.gen_range(0..surfaces.len())];
        let words: Vec<String> = (0..3)
            .map(|_| surfaces[rng.gen_range(0..surfaces.len())].clone())
            .collect();
        let e_m = enc.mention_embed(s);
        let ctx = enc.context_embed(&words, rng.gen_range(0..3));
        let sup = rng.gen_bool(0.2).then(|| format!("l{}", rng.gen_range(0..40)));
        let d = engine.process(0, kind, s, &e_m, &ctx, sup.as_deref());
        for v in [d.max_p, d.max_o, d.gamma] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                violations += 1;
            }
        }
        if step % 10_000 == 0 {
            engine.check_invariants();
        }
    }
    engine.check_invariants();
    gate.check(2, "score bounds under fuzzing", violations == 0, format!("{ops} ops, {violations} violations"));
}

/// Criterion 3: a scripted micro-stream drives every update branch, with
/// state assertions per branch.
fn branch_coverage(gate: &mut Gate) {
    let enc = HashEncoder::new(64);
    let mut engine = Engine::new(Config::default());
    let mut seen: HashMap<&'static str, usize> = HashMap::new();
    let mut ok = true;
    let step = |engine: &mut Engine,
                    sentence: &[&str],
                    target: usize,
                    sup: Option<&str>|
     -> streamkb::engine::LinkDecision {
        let words: Vec<String> = sentence.iter().map(|s| s.to_string()).collect();
        let e_m = enc.mention_embed(sentence[target]);
        let ctx = enc.context_embed(&words, target);
        engine.process(0, MentionKind::Entity, sentence[target], &e_m, &ctx, sup)
    };

    // unknown: first contact with an empty KB creates an instance
    let d = step(&mut engine, &["rex", "chased", "the ball"], 0, None);
    ok &= d.case == LinkCase::Unknown && engine.entities.state.instance_count() == 1;
    seen.insert(d.case.as_str(), 1);

    // recognized: the identical mention now clears the accept threshold
    let d = step(&mut engine, &["rex", "chased", "the ball"], 0, None);
    ok &= d.case == LinkCase::Recognized && d.max_o >= 0.9 && d.instance == 0;
    *seen.entry(d.case.as_str()).or_default() += 1;

    // supervised-new: a fresh surface with a fresh label binds it
    let d = step(&mut engine, &["mira", "visited", "the park"], 0, Some("e1"));
    ok &= d.case == LinkCase::SupervisedNew
        && engine.entities.map.instance_of("e1") == Some(d.instance);
    *seen.entry(d.case.as_str()).or_default() += 1;

    // supervised-known: the same label reinforces the bound instance
    let d = step(&mut engine, &["mira", "plays", "the piano"], 0, Some("e1"));
    ok &= d.case == LinkCase::SupervisedKnown
        && d.instance == engine.entities.map.instance_of("e1").unwrap();
    *seen.entry(d.case.as_str()).or_default() += 1;

    // supervised-collision: a different label over the same evidence must
    // not steal the bound instance
    let before = engine.entities.state.instance_count();
    let d = step(&mut engine, &["mira", "visited", "the park"], 0, Some("e2"));
    ok &= d.case == LinkCase::SupervisedCollision
        && engine.entities.state.instance_count() == before + 1
        && engine.entities.map.instance_of("e2") == Some(d.instance)
        && d.instance != engine.entities.map.instance_of("e1").unwrap();
    *seen.entry(d.case.as_str()).or_default() += 1;

    // uncertain: a near-miss surface in a foreign context scores above
    // reject but below accept and must leave the state untouched
    engine.story_boundary();
    let raw_before = engine.entities.state.raw_score(0, 0);
    let d = step(&mut engine, &["rec", "barked at", "the mailman"], 0, None);
    ok &= d.case == LinkCase::Uncertain
        && engine.entities.state.raw_score(0, 0) == raw_before;
    *seen.entry(d.case.as_str()).or_default() += 1;

    engine.check_invariants();
    let all_cases = seen.len() == 6;
    gate.check(
        3,
        "update-branch coverage",
        ok && all_cases,
        format!("cases hit: {}, assertions {}", seen.len(), if ok { "held" } else { "violated" }),
    );
}

/// Criterion 4: a single supervision suffices to re-link the identical
/// sentence above the accept threshold.
fn one_shot(gate: &mut Gate) {
    let enc = HashEncoder::new(64);
    let mut engine = Engine::new(Config::default());
    let words: Vec<String> = vec!["dana".into(), "owns".into(), "the car".into()];
    let e_m = enc.mention_embed("dana");
    let ctx = enc.context_embed(&words, 0);
    engine.process(0, MentionKind::Entity, "dana", &e_m, &ctx, Some("e7"));
    let d = engine.process(0, MentionKind::Entity, "dana", &e_m, &ctx, None);
    let bound = engine.entities.map.instance_of("e7");
    gate.check(
        4,
        "one-shot learning",
        d.max_o >= 0.9 && Some(d.instance) == bound,
        format!("o {:.4}, linked to supervised instance: {}", d.max_o, Some(d.instance) == bound),
    );
}

/// Criterion 5: analytic gradients of both trainable networks match
/// central finite differences.
fn gradient_checks(gate: &mut Gate) {
    let start = Instant::now();
    let mut bad = 0usize;
    let mut checked = 0usize;
    let tol = |num: f64, ana: f64| {
        let denom = num.abs().max(ana.abs());
        let diff = (num - ana).abs();
        denom < 1e-7 || diff / denom < 1e-4 || diff < 1e-9
    };

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut tagger = Tagger::new(2, 2, 2, 3, 6, &mut rng);
    let words: Vec<String> = vec!["ab".into(), "c".into(), "ba".into()];
    let targets = vec![Some(0), None, Some(5)];
    let (_, grads) = tagger.sentence_grads(&words, &targets);
    let mut gflat = Vec::new();
    grads.write_flat(&mut gflat);
    let mut flat = Vec::new();
    tagger.write_flat(&mut flat);
    let eps = 1e-5;
    for i in (0..flat.len()).step_by(5) {
        let orig = flat[i];
        flat[i] = orig + eps;
        tagger.read_flat(&mut flat.iter());
        let up = tagger.sentence_loss(&words, &targets);
        flat[i] = orig - eps;
        tagger.read_flat(&mut flat.iter());
        let down = tagger.sentence_loss(&words, &targets);
        flat[i] = orig;
        tagger.read_flat(&mut flat.iter());
        let num = (up - down) / (2.0 * eps);
        if num.abs().max(gflat[i].abs()) < 1e-7 {
            continue;
        }
        checked += 1;
        if !tol(num, gflat[i]) {
            bad += 1;
        }
    }

    let mut enc = NeuralEncoder::new(2, 3, 3, &mut rng);
    let mentions: Vec<String> = vec!["ab".into(), "ca".into(), "bc".into()];
    let (_, grads) = enc.sentence_grads(&mentions, 1);
    let mut gflat = Vec::new();
    grads.write_flat(&mut gflat);
    let mut flat = Vec::new();
    enc.write_flat(&mut flat);
    for i in (0..flat.len()).step_by(7) {
        let orig = flat[i];
        flat[i] = orig + eps;
        enc.read_flat(&mut flat.iter());
        let up = enc.sentence_loss(&mentions, 1);
        flat[i] = orig - eps;
        enc.read_flat(&mut flat.iter());
        let down = enc.sentence_loss(&mentions, 1);
        flat[i] = orig;
        enc.read_flat(&mut flat.iter());
        let num = (up - down) / (2.0 * eps);
        if num.abs().max(gflat[i].abs()) < 1e-7 {
            continue;
        }
        checked += 1;
        if !tol(num, gflat[i]) {
            bad += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    gate.check(
        5,
        "gradient checks",
        bad == 0 && checked > 80 && elapsed < 60.0,
        format!("{checked} params checked, {bad} mismatches, {elapsed:.1}s"),
    );
}

fn interference_cfg(seed: u64) -> Config {
    let mut cfg = Config::default();
    cfg.no_temporal = true;
    cfg.unblock_margin = 0.2;
    cfg.fraction = 0.9;
    cfg.seed = seed;
    cfg
}

/// Criteria 6 and 7: the target-story interference protocol over ten
/// seeds and all four settings.
fn interference(gate: &mut Gate, pool: &InstancePool) {
    let enc = HashEncoder::new(64);
    let settings = [Setting::A, Setting::B, Setting::C, Setting::D];
    let mut acc_last = [0.0f64; 4];
    let mut amb_last = [0.0f64; 4];
    let mut constant_a = true;
    let mut min_a: f64 = 1.0;
    for seed in 0..10u64 {
        for (si, setting) in settings.iter().enumerate() {
            let cfg = interference_cfg(20 + seed);
            let report = run_longstream(pool, &cfg, *setting, &enc).unwrap();
            let last = report.rows.last().unwrap();
            acc_last[si] += last.accuracy / 10.0;
            amb_last[si] += last.ambiguity / 10.0;
            if si == 0 {
                let first = report.rows[0].accuracy;
                constant_a &= report.rows.iter().all(|r| r.accuracy == first);
                min_a = min_a.min(first);
            }
        }
    }
    gate.check(
        6,
        "no forgetting without interference",
        constant_a && min_a >= 0.90,
        format!("exactly constant: {constant_a}, min accuracy {min_a:.4}"),
    );
    let amb_ordered =
        amb_last[0] < amb_last[1] && amb_last[1] < amb_last[2] && amb_last[2] < amb_last[3];
    let acc_ordered =
        acc_last[0] >= acc_last[1] && acc_last[1] >= acc_last[2] && acc_last[2] >= acc_last[3];
    gate.check(
        7,
        "interference tracks ambiguity",
        amb_ordered && acc_ordered,
        format!(
            "ambiguity {:.2}/{:.2}/{:.2}/{:.2}, accuracy {:.3}/{:.3}/{:.3}/{:.3}",
            amb_last[0], amb_last[1], amb_last[2], amb_last[3],
            acc_last[0], acc_last[1], acc_last[2], acc_last[3]
        ),
    );
}

/// Criteria 8, 10, 11a: one default-corpus run at 50% supervision feeds
/// the baseline comparison, the gate statistics, and the temporal
/// ablation.
fn default_corpus_checks(gate: &mut Gate, pool: &InstancePool) {
    let start = Instant::now();
    let cfg = Config::default();
    let enc = HashEncoder::new(64);
    let (mut corpus, _) = generate_stream(pool, &cfg).unwrap();
    split_supervision(&mut corpus, cfg.fraction);

    let full = run_stream(&corpus, &cfg, &enc, None).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let (_, rb) = rb_baseline(&corpus);
    let margin = full.metrics.entity_all - rb.entity_all;
    gate.check(
        8,
        "beats count baseline",
        margin >= 0.05 && elapsed < 1800.0,
        format!(
            "entity ALL {:.4} vs baseline {:.4} (+{:.1} points), {elapsed:.0}s",
            full.metrics.entity_all,
            rb.entity_all,
            margin * 100.0
        ),
    );

    // gate statistics over unsupervised entity mentions
    let (mut gp, mut go) = ((0.0, 0usize), (0.0, 0usize));
    for r in full.log.iter().filter(|r| r.kind == MentionKind::Entity && !r.supervised) {
        if r.pronoun {
            gp.0 += r.gamma;
            gp.1 += 1;
        } else {
            go.0 += r.gamma;
            go.1 += 1;
        }
    }
    let gamma_pron = gp.0 / gp.1 as f64;
    let gamma_other = go.0 / go.1 as f64;
    let side = full.engine.side(MentionKind::Entity);
    let mut pz = (0.0, 0usize);
    for p in ["she", "he", "it", "they"] {
        if let Some(row) = side.state.lookup_mention(&MentionKey::new(p)) {
            pz.0 += side.state.activated_row(row).into_iter().fold(0.0f64, f64::max);
            pz.1 += 1;
        }
    }
    let pron_pz = pz.0 / pz.1.max(1) as f64;
    gate.check(
        10,
        "gate prefers recency for pronouns",
        gamma_pron > gamma_other && pron_pz < 0.1,
        format!("gamma {gamma_pron:.3} vs {gamma_other:.3}, pronoun string score {pron_pz:.4}"),
    );

    let mut cfg_nt = cfg.clone();
    cfg_nt.no_temporal = true;
    let nt = run_stream(&corpus, &cfg_nt, &enc, None).unwrap().metrics;
    let chance = 1.0 / pool.entities.len() as f64;
    let temporal_ok = full.metrics.entity_all > nt.entity_all && nt.entity_all > chance;

    // word-level ablation on a noisier corpus
    let mut cfg_typo = Config::default();
    cfg_typo.typo_rate = 0.05;
    let (mut noisy, _) = generate_stream(pool, &cfg_typo).unwrap();
    split_supervision(&mut noisy, cfg_typo.fraction);
    let full_noisy = run_stream(&noisy, &cfg_typo, &enc, None).unwrap().metrics;
    let mut cfg_wl = cfg_typo.clone();
    cfg_wl.word_level = true;
    let wl_enc = WordLevelEncoder::new(HashEncoder::new(64), pool.vocabulary());
    let wl = run_stream(&noisy, &cfg_wl, &wl_enc, None).unwrap().metrics;
    let wl_ok = full_noisy.entity_all > wl.entity_all;
    gate.check(
        11,
        "ablation ordering",
        temporal_ok && wl_ok,
        format!(
            "full {:.4} > no-temporal {:.4} > chance {:.4}; noisy full {:.4} > word-level {:.4}",
            full.metrics.entity_all, nt.entity_all, chance, full_noisy.entity_all, wl.entity_all
        ),
    );
}

/// Criterion 9: a second unsupervised pass over a sparsely supervised
/// stream does not hurt.
fn rereading_gain(gate: &mut Gate, pool: &InstancePool) {
    let enc = HashEncoder::new(64);
    let mut first_mean = 0.0;
    let mut second_mean = 0.0;
    for seed in 0..5u64 {
        let mut cfg = Config::default();
        cfg.seed = 100 + seed;
        cfg.stories = 150;
        cfg.sentences = 2650;
        cfg.fraction = 0.1;
        let (mut corpus, _) = generate_stream(pool, &cfg).unwrap();
        split_supervision(&mut corpus, cfg.fraction);
        let outcome = run_rereading(&corpus, &cfg, &enc, None).unwrap();
        first_mean += outcome.first.entity_all / 5.0;
        second_mean += outcome.second.entity_all / 5.0;
    }
    gate.check(
        9,
        "re-reading gain",
        second_mean >= first_mean,
        format!("entity ALL first {first_mean:.4}, second {second_mean:.4}"),
    );
}

/// Criterion 12: the default corpus hits the documented size and
/// ambiguity targets.
fn corpus_fidelity(gate: &mut Gate, pool: &InstancePool) {
    let cfg = Config::default();
    let (_, stats) = generate_stream(pool, &cfg).unwrap();
    let coref_ok = (6380..=9570).contains(&stats.coreferences);
    let amb_ok = (5464..=8196).contains(&stats.ambiguous);
    let size_ok = stats.stories == 564 && stats.sentences.abs_diff(10_000) <= 500;
    gate.check(
        12,
        "corpus statistics",
        size_ok && coref_ok && amb_ok,
        format!(
            "{} stories, {} sentences, {} coreferences, {} ambiguous",
            stats.stories, stats.sentences, stats.coreferences, stats.ambiguous
        ),
    );
}

/// Criterion 13: the greedy purity mapping stays within 2% of the
/// exhaustive optimum in aggregate; every suboptimal table is counted.
fn purity_optimality(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut total_greedy = 0usize;
    let mut total_best = 0usize;
    let mut deviations = 0usize;
    let mut sound = true;
    for _ in 0..1000 {
        let np = rng.gen_range(1..=6);
        let ng = rng.gen_range(1..=6);
        let mut pm = PurityMap::new();
        let mut counts = HashMap::new();
        for p in 0..np {
            for g in 0..ng {
                let c = rng.gen_range(0..5usize);
                for _ in 0..c {
                    pm.observe(p, g);
                }
                if c > 0 {
                    counts.insert((p, g), c);
                }
            }
        }
        let best = exhaustive_matched_count(&counts);
        let got = pm.matched_count();
        sound &= got <= best;
        if got < best {
            deviations += 1;
        }
        total_greedy += got;
        total_best += best;
    }
    let bound_ok = total_greedy as f64 >= 0.98 * total_best as f64;
    gate.check(
        13,
        "purity mapping optimality",
        sound && bound_ok,
        format!(
            "{deviations}/1000 suboptimal tables, matched {total_greedy}/{total_best} ({:.2}%)",
            100.0 * total_greedy as f64 / total_best as f64
        ),
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    let pool = build_default_pool(build_default_ontology());
    formula_oracles(&mut gate);
    score_bounds(&mut gate);
    branch_coverage(&mut gate);
    one_shot(&mut gate);
    gradient_checks(&mut gate);
    interference(&mut gate, &pool);
    default_corpus_checks(&mut gate, &pool);
    rereading_gain(&mut gate, &pool);
    corpus_fidelity(&mut gate, &pool);
    purity_optimality(&mut gate);
    assert!(gate.failures.is_empty(), "failed criteria:\n{}", gate.failures.join("\n"));
}
