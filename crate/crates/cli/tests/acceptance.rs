//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use clxai_core::explainer::instances::{random_instance, random_instances};
use clxai_core::explainer::{check_instance, Explanation, FeedbackConstraints, PlantRange};
use clxai_core::game::{jsonl, replay, Engine, EventKind, GameEvent, SessionState};
use clxai_core::metrics::{parse_report, REPORT_COLUMNS};
use clxai_core::predictor::{train_for_world, TrainParams, TrainedModel};
use clxai_core::rng::SeedRng;
use clxai_core::simulator::{compare_policies, run_policy, LearnerPolicy};
use clxai_core::world::{Diet, Label, WorldConfig};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

const INSTANCES: usize = 500;
const INSTANCE_SEED: u64 = 2024;

struct Fixture {
    world: WorldConfig,
    oracle: Engine,
    tree: Engine,
}

impl Fixture {
    fn new() -> Self {
        let world = WorldConfig::default();
        let run = train_for_world(&world, 10_000, 0.2, &TrainParams::default()).expect("training");
        Self {
            oracle: Engine::with_regenerated_stats(world.clone(), TrainedModel::oracle(&world)).expect("oracle engine"),
            tree: Engine::with_regenerated_stats(world.clone(), run.model).expect("tree engine"),
            world,
        }
    }

    fn engines(&self) -> [(&'static str, &Engine); 2] {
        [("oracle", &self.oracle), ("tree", &self.tree)]
    }
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(
        elapsed <= Duration::from_secs(limit_s),
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn ce_validity(f: &Fixture) -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (name, engine) in f.engines() {
        let explainer = engine.explainer();
        let (mut found, mut valid) = (0, 0);
        for inst in random_instances(&f.world, INSTANCES, INSTANCE_SEED) {
            let out = explainer
                .generate_counterfactual(&inst.original, &inst.constraints)
                .map_err(|e| e.to_string())?;
            if let Explanation::Counterfactual(cf) = out {
                found += 1;
                if engine.model().predict(&cf.suggested).map_err(|e| e.to_string())?.label == Label::Improve {
                    valid += 1;
                }
            }
        }
        ensure(
            valid == found,
            format!("{name}: only {valid}/{found} counterfactuals predicted IMPROVE"),
        )?;
        parts.push(format!("{name} {valid}/{found}"));
    }
    within(start.elapsed(), 10)?;
    Ok(format!("every counterfactual predicted IMPROVE ({})", parts.join(", ")))
}

fn ce_optimality(f: &Fixture) -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (name, engine) in f.engines() {
        let explainer = engine.explainer();
        let mut agree = 0;
        for (i, inst) in random_instances(&f.world, INSTANCES, INSTANCE_SEED).iter().enumerate() {
            match check_instance(&explainer, inst).map_err(|e| e.to_string())? {
                clxai_core::explainer::InstanceCheck::Disagree { detail } => {
                    return Err(format!("{name} instance {i}: {detail}"))
                }
                _ => agree += 1,
            }
        }
        parts.push(format!("{name} {agree}/{INSTANCES}"));
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "distance and diet match exhaustive search ({})",
        parts.join(", ")
    ))
}

fn guidance_soundness(f: &Fixture) -> Outcome {
    let mut parts = Vec::new();
    for (name, engine) in f.engines() {
        let explainer = engine.explainer();
        let mut rng = SeedRng::new(INSTANCE_SEED + 1);
        let (mut infeasible, mut sound, mut drawn) = (0, 0, 0);
        while infeasible < 100 {
            drawn += 1;
            ensure(
                drawn <= 100_000,
                format!("{name}: only {infeasible} infeasible instances in 100000 draws"),
            )?;
            let inst = random_instance(&f.world, &mut rng);
            let out = explainer
                .generate_counterfactual(&inst.original, &inst.constraints)
                .map_err(|e| e.to_string())?;
            if let Explanation::Guidance(g) = out {
                infeasible += 1;
                let applied = g.apply(&inst.constraints);
                if let Ok(Explanation::Counterfactual(_)) = explainer.generate_counterfactual(&inst.original, &applied)
                {
                    sound += 1;
                }
            }
        }
        ensure(sound == 100, format!("{name}: guidance sound on {sound}/100"))?;
        parts.push(format!("{name} 100/100 of {drawn} drawn"));
    }
    Ok(format!(
        "applying guidance yields a counterfactual ({})",
        parts.join(", ")
    ))
}

fn worked_example(f: &Fixture) -> Outcome {
    let constraints = FeedbackConstraints {
        mutable_plants: vec![1, 3],
        ranges: vec![
            PlantRange {
                plant: 1,
                min: 0,
                max: 4,
            },
            PlantRange {
                plant: 3,
                min: 0,
                max: 3,
            },
        ],
        budget: 20,
        max_changes: 3,
    };
    let out = f
        .oracle
        .explainer()
        .generate_counterfactual(&Diet::new(vec![1, 1, 0, 0, 2]), &constraints)
        .map_err(|e| e.to_string())?;
    let cf = out.counterfactual().ok_or("no counterfactual returned")?;
    ensure(
        cf.suggested == Diet::new(vec![1, 4, 0, 0, 2]) && cf.distance == 6,
        format!("got {} at distance {}", cf.suggested, cf.distance),
    )?;
    Ok(format!("(1,1,0,0,2) -> {} at distance {}", cf.suggested, cf.distance))
}

fn model_quality(f: &Fixture) -> Outcome {
    let run = train_for_world(&f.world, 10_000, 0.2, &TrainParams::default()).map_err(|e| e.to_string())?;
    ensure(
        run.holdout.clean_accuracy >= 0.90,
        format!("held-out clean accuracy {:.4}", run.holdout.clean_accuracy),
    )?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let status = clxai(
            &["train", "--samples", "10000", "--seed", "42", "--depth", "8", "--out"],
            &[&out],
        )?;
        ensure(status.0 == 0, format!("clxai train exited {}: {}", status.0, status.2))?;
        bytes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], "two training runs wrote different files")?;
    ensure(
        bytes[0] == run.model.to_json().into_bytes(),
        "CLI model differs from library model",
    )?;
    Ok(format!(
        "held-out clean accuracy {:.4} on {} rows; model files byte-identical",
        run.holdout.clean_accuracy, run.holdout_rows
    ))
}

fn explanation_rounds(events: &[GameEvent]) -> Vec<u32> {
    events
        .iter()
        .filter_map(|e| match &e.event {
            EventKind::ExplanationIssued { round_number, .. } | EventKind::GuidanceIssued { round_number, .. } => {
                Some(*round_number)
            }
            _ => None,
        })
        .collect()
}

fn replay_determinism(f: &Fixture) -> Outcome {
    let policies = [
        LearnerPolicy::Random,
        LearnerPolicy::GreedyCost,
        LearnerPolicy::CeFollower,
        LearnerPolicy::NoisyCeFollower(0.3),
    ];
    let mut checked = 0;
    for (i, policy) in policies.iter().enumerate() {
        for (engine_name, engine) in f.engines() {
            let k = (i as u32 % 4) + 1 + u32::from(engine_name == "tree");
            let mut template = engine.session_config("t", 0);
            template.explanation_interval = k;
            for s in run_policy(engine, *policy, &template, 13, 500 + i as u64).map_err(|e| e.to_string())? {
                let text = jsonl::encode(s.events());
                let parsed: Vec<GameEvent> = text
                    .lines()
                    .map(serde_json::from_str)
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let state = replay(&parsed).map_err(|e| e.to_string())?;
                ensure(&state == s.state(), format!("{} replays to a different state", s.id()))?;
                let expected: Vec<u32> = (1..=template.total_rounds).filter(|r| r % k == 0).collect();
                ensure(
                    explanation_rounds(&parsed) == expected,
                    format!(
                        "{}: explanations at {:?}, expected {expected:?}",
                        s.id(),
                        explanation_rounds(&parsed)
                    ),
                )?;
                checked += 1;
            }
        }
    }
    ensure(checked >= 100, format!("only {checked} sessions checked"))?;
    Ok(format!(
        "{checked} sessions replay exactly; explanations only at rounds ≡ 0 mod k"
    ))
}

fn co_learning(f: &Fixture) -> Outcome {
    let start = Instant::now();
    let template = f.oracle.session_config("t", 0);
    let c = compare_policies(
        &f.oracle,
        LearnerPolicy::CeFollower,
        LearnerPolicy::Random,
        &template,
        100,
        INSTANCE_SEED,
    )
    .map_err(|e| e.to_string())?;
    let summary = format!(
        "slope {:.3} vs {:.3}, final fitness {:.2} vs {:.2} (gap {:.2})",
        c.a.fitness_slope.mean,
        c.b.fitness_slope.mean,
        c.a.final_fitness.mean,
        c.b.final_fitness.mean,
        c.final_fitness_gap
    );
    ensure(c.slope_gap > 0.0, format!("slope not higher: {summary}"))?;
    ensure(
        c.final_fitness_gap > 0.0,
        format!("final fitness not higher: {summary}"),
    )?;
    ensure(c.final_fitness_gap >= 20.0, format!("gap below 20: {summary}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!("CE_FOLLOWER vs RANDOM, 100 paired sessions: {summary}"))
}

fn metrics_pipeline(f: &Fixture) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let logs = dir.path().join("logs");
    let csv = dir.path().join("report.csv");
    let (code, _, err) = clxai(
        &[
            "simulate",
            "--policy",
            "noisy:0.2",
            "--sessions",
            "12",
            "--seed",
            "9",
            "--out",
        ],
        &[&logs],
    )?;
    ensure(code == 0, format!("simulate exited {code}: {err}"))?;
    let pattern = format!("{}/*.jsonl", logs.display());
    let (code, _, err) = clxai(&["metrics", "--logs", &pattern, "--out"], &[&csv])?;
    ensure(code == 0, format!("metrics exited {code}: {err}"))?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    ensure(
        text.lines().count() == 13,
        format!("{} CSV lines for 12 sessions", text.lines().count()),
    )?;
    ensure(
        text.lines().next() == Some(REPORT_COLUMNS.join(",").as_str()),
        "header does not match the report schema",
    )?;
    let rows = parse_report(text.as_bytes()).map_err(|e| e.to_string())?;
    for r in &rows {
        let rates = [
            r.validity_rate,
            r.feasibility_rate,
            r.understanding,
            r.improve_rate_h1,
            r.improve_rate_h2,
        ];
        ensure(
            rates.iter().flatten().all(|v| (0.0..=1.0).contains(v)),
            format!("{}: rate out of range", r.session_id),
        )?;
        ensure(
            r.satisfaction.is_some_and(|s| (1.0..=5.0).contains(&s)),
            "satisfaction out of range",
        )?;
    }

    let engine = &f.oracle;
    let mut s = engine
        .create_session(engine.session_config("metrics", 3), 0)
        .map_err(|e| e.to_string())?;
    for r in 0..12 {
        s.submit_round(engine, Diet::new(vec![1, 1, 0, 0, 2]), 10, None, r)
            .and_then(|_| s.acknowledge(r))
            .map_err(|e| e.to_string())?;
    }
    let satisfaction = s
        .submit_questionnaire(vec![5; 8], None, 20)
        .map_err(|e| e.to_string())?;
    let understanding = s.answer_probes(&[Label::Improve; 6], 21).map_err(|e| e.to_string())?;
    ensure(
        satisfaction == 5.0,
        format!("all-5 questionnaire scored {satisfaction}"),
    )?;
    ensure(
        understanding == 0.5,
        format!("all-IMPROVE probes scored {understanding}"),
    )?;
    Ok("12 simulated logs -> 13-line schema-conformant CSV; all-5 = 5.0; all-IMPROVE probes = 0.5".into())
}

fn clxai(args: &[&str], paths: &[&Path]) -> Result<(i32, String, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_clxai"))
        .args(args)
        .args(paths)
        .output()
        .map_err(|e| format!("cannot run clxai: {e}"))?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    ))
}

struct Server {
    base: String,
    state: clxai_service::AppState,
    task: tokio::task::JoinHandle<()>,
}

async fn start_server(dir: &Path) -> Result<Server, String> {
    let config = clxai_service::ServiceConfig {
        data_dir: dir.to_owned(),
        snapshot_every: 7,
        ..Default::default()
    };
    let state = clxai_service::build_state(&config).map_err(|e| e.to_string())?;
    let app = clxai_service::router(state.clone(), None, None).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let base = format!(
        "http://{}/api/v1/sessions",
        listener.local_addr().map_err(|e| e.to_string())?
    );
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(Server { base, state, task })
}

async fn call(client: &reqwest::Client, method: &str, url: String, body: Value) -> Result<(u16, Value), String> {
    let req = match method {
        "GET" => client.get(url),
        _ => client.post(url).json(&body),
    };
    let r = req.send().await.map_err(|e| e.to_string())?;
    let status = r.status().as_u16();
    Ok((status, r.json().await.map_err(|e| e.to_string())?))
}

fn without_times(events: &[GameEvent]) -> Vec<GameEvent> {
    events
        .iter()
        .cloned()
        .map(|mut e| {
            e.timestamp = 0;
            e
        })
        .collect()
}

fn without_clock(mut s: SessionState) -> SessionState {
    s.created_at_ms = 0;
    s
}

async fn service_contract_async() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client = reqwest::Client::new();
    let srv = start_server(dir.path()).await?;
    let engine = srv.state.engine.clone();

    let (code, _) = call(
        &client,
        "POST",
        srv.base.clone(),
        json!({"session_id": "contract", "seed": 31}),
    )
    .await?;
    ensure(code == 201, format!("create returned {code}"))?;
    let s = format!("{}/contract", srv.base);
    let mut direct = engine
        .create_session(engine.session_config("contract", 31), 0)
        .map_err(|e| e.to_string())?;

    let (code, err) = call(
        &client,
        "POST",
        format!("{s}/rounds"),
        json!({"diet": [1, 0, 0, 0, 4], "decision_ms": 3}),
    )
    .await?;
    ensure(
        code == 409 && err["code"] == "BUDGET_EXCEEDED",
        format!("over-budget returned {code} {err}"),
    )?;
    let (_, view) = call(&client, "GET", s.clone(), Value::Null).await?;
    ensure(
        view["round_number"] == 1 && view["event_count"] == 1,
        "over-budget submission consumed a round",
    )?;

    let diets = [[1, 1, 0, 0, 2], [0, 2, 0, 1, 0], [6, 0, 0, 0, 0], [0, 0, 2, 1, 0]];
    let mut snapshot_view = Value::Null;
    for r in 1..=12u32 {
        let diet = diets[r as usize % diets.len()];
        let (code, out) = call(
            &client,
            "POST",
            format!("{s}/rounds"),
            json!({"diet": diet, "decision_ms": 100 * r}),
        )
        .await?;
        ensure(code == 200, format!("round {r} returned {code}: {out}"))?;
        let record = direct
            .submit_round(&engine, Diet::new(diet.to_vec()), u64::from(100 * r), None, 0)
            .map_err(|e| e.to_string())?;
        ensure(
            out["round_record"] == serde_json::to_value(&record).map_err(|e| e.to_string())?,
            format!("round {r} differs from the engine"),
        )?;
        let (code, _) = call(&client, "POST", format!("{s}/ack"), json!({})).await?;
        ensure(code == 200, format!("ack {r} returned {code}"))?;
        direct.acknowledge(0).map_err(|e| e.to_string())?;
        if r == 6 {
            snapshot_view = call(&client, "GET", s.clone(), Value::Null).await?.1;
        }
    }
    call(
        &client,
        "POST",
        format!("{s}/questionnaire"),
        json!({"items": [4, 4, 4, 4, 4, 4, 4, 4]}),
    )
    .await?;
    direct
        .submit_questionnaire(vec![4; 8], None, 0)
        .map_err(|e| e.to_string())?;
    let answers = vec!["WORSEN"; 6];
    call(&client, "POST", format!("{s}/probes"), json!({"answers": answers})).await?;
    direct
        .answer_probes(&[Label::Worsen; 6], 0)
        .map_err(|e| e.to_string())?;

    let log_text = client
        .get(format!("{s}/log"))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .text()
        .await
        .map_err(|e| e.to_string())?;
    let logged: Vec<GameEvent> = log_text
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(
        without_times(&logged) == without_times(direct.events()),
        "HTTP event log differs from direct engine execution",
    )?;
    let (_, before_crash) = call(&client, "GET", s.clone(), Value::Null).await?;
    ensure(!snapshot_view.is_null(), "no mid-session view")?;

    srv.task.abort();
    let _ = srv.task.await;
    drop(srv.state);
    let log_path = jsonl::log_path(dir.path(), "contract");
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(|e| e.to_string())?;
        f.write_all(b"{\"seq\":9999,\"timest").map_err(|e| e.to_string())?;
    }
    ensure(
        clxai_service::store::snapshot_path(dir.path(), "contract").exists(),
        "no snapshot was written",
    )?;
    let srv = start_server(dir.path()).await?;
    let (code, after) = call(&client, "GET", format!("{}/contract", srv.base), Value::Null).await?;
    ensure(
        code == 200 && after == before_crash,
        "recovered view differs from pre-crash view",
    )?;
    let on_disk = jsonl::read_events(&log_path).map_err(|e| e.to_string())?;
    let replayed = replay(&on_disk).map_err(|e| e.to_string())?;
    ensure(
        without_clock(replayed) == without_clock(direct.state().clone()),
        "recovered log replays to a different state",
    )?;
    srv.task.abort();
    Ok(format!(
        "{} events identical to engine; 409 on cost 21 without consuming; snapshot+tail recovery identical",
        logged.len()
    ))
}

fn service_contract(_: &Fixture) -> Outcome {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(service_contract_async())
}

type Criterion = (&'static str, fn(&Fixture) -> Outcome);

fn main() {
    let started = Instant::now();
    let f = Fixture::new();
    let criteria: [Criterion; 9] = [
        ("ce-validity", ce_validity),
        ("ce-optimality", ce_optimality),
        ("guidance-soundness", guidance_soundness),
        ("worked-example", worked_example),
        ("model-quality", model_quality),
        ("replay-determinism", replay_determinism),
        ("co-learning-effect", co_learning),
        ("metrics-pipeline", metrics_pipeline),
        ("service-contract", service_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(|| check(&f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed [{:.1}s]",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
