//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false` so the summary
//! is always visible under `cargo test`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use aesthetic_captcha::harness::{
    comparison_table, run_catalogue_repeats, run_random_guess, run_replay, solve_by_guessing, synthetic_pool,
    CaptchaApi, GuessEntry, InProcessClient,
};
use aesthetic_captcha::pool::{max_disjoint_puzzles, transform, ImagePool, PoolStats, SharedPool, TransformSeed};
use aesthetic_captcha::puzzle::{
    escalate, generate_puzzle, random_guess_probability, CategoryMode, Polarity, PuzzleSpec,
};
use aesthetic_captcha::service::{ChallengeService, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SECRET: &str = "acceptance-secret";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn measured_client(spec: PuzzleSpec, seed: u64) -> InProcessClient {
    let pool = Arc::new(SharedPool::new(synthetic_pool(PoolStats::new(100, 100))));
    let service = ChallengeService::new(ServiceConfig::measurement(spec, SECRET, seed), pool);
    InProcessClient::new(Arc::new(service), "acceptance")
}

/// Stochastic criteria get one rerun with the next seed; two misses fail.
fn with_rerun(seed: u64, run: impl Fn(u64) -> Outcome) -> Outcome {
    match run(seed) {
        Ok(msg) => Ok(msg),
        Err(first) => run(seed + 1)
            .map(|msg| format!("{msg} (rerun after: {first})"))
            .map_err(|second| format!("{first}; rerun: {second}")),
    }
}

fn within_time(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn guess_rate() -> Outcome {
    let start = Instant::now();
    let out = with_rerun(7, |seed| {
        let spec = PuzzleSpec::default();
        let api = measured_client(spec, seed);
        let r =
            run_random_guess(&api, &spec, 20_000, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let msg = format!("rate {:.4} over {} trials", r.empirical_rate, r.trials);
        if (0.1045..=0.1177).contains(&r.empirical_rate) {
            Ok(msg)
        } else {
            Err(format!("{msg} outside [0.1045, 0.1177]"))
        }
    })?;
    let took = within_time(Duration::from_secs(60), start)?;
    Ok(format!("{out}, {took:.2?}"))
}

fn table_one() -> Outcome {
    let rows = comparison_table();
    let want = [
        ("Text-based reCAPTCHA", "<1%", None),
        ("Image-based reCAPTCHA", "1.8%", Some(56)),
        ("NCRC", "N/A", None),
        ("sweetCaptcha", "25%", Some(4)),
        ("Aesthetic CAPTCHA", "11.1%", Some(9)),
    ];
    if rows.len() != want.len() {
        return Err(format!("{} rows", rows.len()));
    }
    for (row, (scheme, label, denom)) in rows.iter().zip(want) {
        if row.scheme != scheme || row.entry.label() != label {
            return Err(format!(
                "{} = {}, expected {scheme} = {label}",
                row.scheme,
                row.entry.label()
            ));
        }
        let got = match &row.entry {
            GuessEntry::Exact { probability, .. } => Some(probability.denominator),
            _ => None,
        };
        if got != denom {
            return Err(format!("{scheme}: denominator {got:?}, expected {denom:?}"));
        }
    }
    if !matches!(&rows[2].entry, GuessEntry::NotApplicable { note } if note == "fixed action (checking a box)") {
        return Err("NCRC note".into());
    }
    Ok("1/56 = 1.8%, 1/4 = 25%, 1/9 = 11.1%, <1%, N/A".into())
}

fn pool_capacity() -> Outcome {
    let q = max_disjoint_puzzles(PoolStats::new(5_000, 5_000), 9);
    if q == 1111 && q > 1000 {
        Ok(format!("floor(10000 / 9) = {q}"))
    } else {
        Err(format!("got {q}"))
    }
}

fn one_shot_tokens() -> Outcome {
    let spec = PuzzleSpec::default();
    let api = measured_client(spec, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let (token, _) = solve_by_guessing(&api, &spec, &mut rng).map_err(|e| e.to_string())?;
    let mut successes = 0;
    for _ in 0..1000 {
        if api.verify_token(&token).map_err(|e| e.to_string())?.success {
            successes += 1;
        }
    }
    if successes != 1 {
        return Err(format!("{successes} successes over 1000 verifies"));
    }

    for rep in 0..100 {
        let (token, clicks) = solve_by_guessing(&api, &spec, &mut rng).map_err(|e| e.to_string())?;
        let barrier = Barrier::new(64);
        let winners: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..64)
                .map(|i| {
                    let (api, barrier, token, clicks) = (&api, &barrier, &token, &clicks);
                    s.spawn(move || {
                        barrier.wait();
                        // Every other caller also tries to resubmit the answer.
                        if i % 2 == 1 {
                            let _ = api.submit_answer(token, clicks);
                        }
                        api.verify_token(token).map(|v| v.success as usize).unwrap_or(0)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        if winners != 1 {
            return Err(format!("repetition {rep}: {winners} winners"));
        }
    }
    Ok("1/1000 verifies succeed; 100 x 64-way races each had exactly 1 winner".into())
}

fn replay_bot() -> Outcome {
    let start = Instant::now();
    let out = with_rerun(13, |seed| {
        let spec = PuzzleSpec::default();
        let api = measured_client(spec, seed);
        let r =
            run_replay(&api, &spec, 20_000, &[0], &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let theo = 1.0 / 9.0;
        let bound = 3.0 * r.fresh.theoretical_stderr().ok_or("no theoretical rate")?;
        let msg = format!(
            "fresh rate {:.4} (1/9 ± {bound:.4}), token replays {}/{}",
            r.fresh.empirical_rate, r.token_replay.successes, r.token_replay.trials
        );
        if (r.fresh.empirical_rate - theo).abs() > bound {
            return Err(format!("{msg}: fresh replay outside 3 stderr"));
        }
        if r.token_replay.successes != 0 {
            return Err(format!("{msg}: token replay succeeded"));
        }
        Ok(msg)
    })?;
    let took = within_time(Duration::from_secs(90), start)?;
    Ok(format!("{out}, {took:.2?}"))
}

fn escalation() -> Outcome {
    let pool = Arc::new(SharedPool::new(synthetic_pool(PoolStats::new(100, 100))));
    let config = ServiceConfig {
        seed: Some(17),
        ..ServiceConfig::new(SECRET)
    };
    let api = InProcessClient::new(Arc::new(ChallengeService::new(config, pool)), "failing-client");
    let mut d = api.create_challenge().map_err(|e| e.to_string())?;
    let mut sizes = vec![d.n];
    for _ in 0..3 {
        // Clicking every slot can never equal the answer set.
        let all: Vec<usize> = (0..d.n).collect();
        let out = api.submit_answer(&d.token, &all).map_err(|e| e.to_string())?;
        d = out.next_challenge.ok_or("no follow-up challenge after a failure")?;
        sizes.push(d.n);
    }
    if sizes[3] != 12 {
        return Err(format!("issued sizes {sizes:?}"));
    }
    let l0 = PuzzleSpec::default();
    let l1 = escalate(&l0);
    let l2 = escalate(&l1);
    let denoms: Vec<u64> = [l0, l1, l2]
        .iter()
        .map(|s| random_guess_probability(s).map(|p| p.denominator))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if denoms != [9, 66, 220] {
        return Err(format!("denominators {denoms:?}"));
    }
    Ok(format!("issued n {sizes:?}; guess probability 1/9 -> 1/66 -> 1/220"))
}

fn puzzle_composition() -> Outcome {
    let start = Instant::now();
    let pool = ImagePool::load_manifest(&fixtures().join("pool/manifest.json")).map_err(|e| e.to_string())?;
    with_rerun(19, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [0u64; 9];
        for i in 0..10_000 {
            let polarity = if rng.random_bool(0.25) {
                Polarity::FindPleasing
            } else {
                Polarity::FindDispleasing
            };
            let mode = if i % 5 == 0 {
                CategoryMode::Homogeneous
            } else {
                CategoryMode::Mixed
            };
            let spec = PuzzleSpec::new(9, 1, polarity, mode).map_err(|e| e.to_string())?;
            let puzzle = generate_puzzle(&spec, &pool, &mut rng).map_err(|e| e.to_string())?;
            puzzle.check_invariants().map_err(|e| format!("puzzle {i}: {e}"))?;
            for &slot in &puzzle.answer_set {
                counts[slot] += 1;
            }
        }
        let expected = 10_000.0 / 9.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(8.0).unwrap().cdf(stat);
        let msg = format!("10000 puzzles valid; target-slot chi2 = {stat:.2}, p = {p:.4}");
        if p > 0.001 {
            Ok(msg)
        } else {
            Err(format!("{msg} <= 0.001"))
        }
    })
    .and_then(|msg| {
        let took = within_time(Duration::from_secs(30), start)?;
        Ok(format!("{msg}, {took:.2?}"))
    })
}

fn catalogue_attack() -> Outcome {
    let start = Instant::now();
    let oracle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixtures().join("catalogue_oracle.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let target = oracle["mean_coverage"].as_f64().ok_or("oracle value missing")?;
    let s = run_catalogue_repeats(
        PoolStats::new(100, 100),
        &PuzzleSpec::default(),
        100,
        1000,
        &mut ChaCha8Rng::seed_from_u64(23),
    )
    .map_err(|e| e.to_string())?;
    let took = within_time(Duration::from_secs(30), start)?;
    let msg = format!(
        "mean coverage {:.4} vs oracle {target:.4} (closed form {:.4}), {took:.2?}",
        s.mean_coverage, s.expected_coverage
    );
    if (s.mean_coverage - target).abs() <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

const TRANSFORM_SEEDS: [u64; 5] = [0, 1, 42, 43, u64::MAX];
const TRANSFORM_FIXTURES: [&str; 4] = [
    "flowers-pleasing-00.png",
    "flowers-pleasing-09.jpg",
    "cars-displeasing-03.png",
    "models-displeasing-19.jpg",
];

fn transform_table() -> Result<BTreeMap<String, String>, String> {
    let mut table = BTreeMap::new();
    for name in TRANSFORM_FIXTURES {
        let raw = fs::read(fixtures().join("pool").join(name)).map_err(|e| e.to_string())?;
        for seed in TRANSFORM_SEEDS {
            let out = transform(&raw, TransformSeed(seed)).map_err(|e| e.to_string())?;
            table.insert(format!("{name}@{seed}"), hex::encode(Sha256::digest(&out)));
        }
    }
    Ok(table)
}

fn transform_determinism() -> Outcome {
    let first = transform_table()?;
    let second = transform_table()?;
    if first != second {
        return Err("two runs disagree".into());
    }
    for name in TRANSFORM_FIXTURES {
        let hashes: std::collections::BTreeSet<_> =
            TRANSFORM_SEEDS.iter().map(|s| &first[&format!("{name}@{s}")]).collect();
        if hashes.len() != TRANSFORM_SEEDS.len() {
            return Err(format!("{name}: seeds collide"));
        }
    }
    let frozen_path = fixtures().join("transform_hashes.json");
    if std::env::var_os("UPDATE_TRANSFORM_FIXTURE").is_some() {
        fs::write(&frozen_path, serde_json::to_string_pretty(&first).unwrap() + "\n").map_err(|e| e.to_string())?;
    }
    let frozen: BTreeMap<String, String> =
        serde_json::from_str(&fs::read_to_string(&frozen_path).map_err(|e| format!("{}: {e}", frozen_path.display()))?)
            .map_err(|e| e.to_string())?;
    if frozen != first {
        let diff: Vec<_> = first.keys().filter(|k| frozen.get(*k) != first.get(*k)).collect();
        return Err(format!("hashes differ from frozen table for {diff:?}"));
    }
    Ok(format!(
        "{} (image, seed) hashes stable across runs and match the frozen table",
        first.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("guess-rate reproduction", guess_rate),
        ("comparison table", table_one),
        ("pool capacity", pool_capacity),
        ("one-shot tokens", one_shot_tokens),
        ("replay bot", replay_bot),
        ("escalation", escalation),
        ("puzzle composition", puzzle_composition),
        ("catalogue attack", catalogue_attack),
        ("transform determinism", transform_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
