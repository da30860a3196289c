use super::*;
use crate::explainer::Explanation;
use crate::world::Label;

fn engine() -> Engine {
    let world = WorldConfig::default();
    Engine::with_regenerated_stats(world.clone(), crate::predictor::TrainedModel::oracle(&world)).unwrap()
}

fn d(v: &[u32]) -> Diet {
    Diet::new(v.to_vec())
}

const WORSEN_DIET: [u32; 5] = [1, 1, 0, 0, 2];
const IMPROVE_DIET: [u32; 5] = [0, 2, 0, 1, 0];

fn play_full(engine: &Engine, session: &mut Session) {
    let mut t = 1_000;
    while session.state().phase != Phase::Questionnaire {
        t += 10;
        let diet = if session.state().round_number.is_multiple_of(3) {
            IMPROVE_DIET
        } else {
            WORSEN_DIET
        };
        session.submit_round(engine, d(&diet), 1200, None, t).unwrap();
        session.acknowledge(t + 1).unwrap();
    }
    session
        .submit_questionnaire(vec![4; 8], Some("fine".into()), t + 2)
        .unwrap();
    session.answer_probes(&[Label::Improve; 6], t + 3).unwrap();
}

#[test]
fn create_defaults() {
    let e = engine();
    let s = e.create_session(e.session_config("s1", 9), 0).unwrap();
    let st = s.state();
    assert_eq!((st.fitness, st.round_number, st.phase), (50, 1, Phase::AwaitingDiet));
    assert_eq!(e.model().predict(&st.current_diet).unwrap().label, Label::Worsen);
    assert!(st.config.world.diet_cost(&st.current_diet).unwrap() <= 20);
    let again = e.create_session(e.session_config("s1", 9), 0).unwrap();
    assert_eq!(again.state(), st);
    assert_eq!(s.events().len(), 1);
    assert_eq!(s.events()[0].event.type_name(), "SESSION_CREATED");
}

#[test]
fn create_rejects_bad_config() {
    let e = engine();
    let mut c = e.session_config("s", 1);
    c.explanation_interval = 0;
    assert!(e.create_session(c, 0).is_err());
    let mut c = e.session_config("s", 1);
    c.optimal_threshold = 10;
    assert!(e.create_session(c, 0).is_err());
    assert!(e.create_session(e.session_config("../etc", 1), 0).is_err());
    let mut c = e.session_config("s", 1);
    c.model_ref = "other".into();
    assert!(e.create_session(c, 0).is_err());
}

#[test]
fn probes_are_stratified() {
    let e = engine();
    let s = e.create_session(e.session_config("p", 4), 0).unwrap();
    let probes = &s.state().probes;
    assert_eq!(probes.len(), PROBE_COUNT);
    let improve = probes.iter().filter(|p| p.model_prediction == Label::Improve).count();
    assert_eq!(improve, 3);
    for p in probes {
        assert_eq!(e.model().predict(&p.diet).unwrap().label, p.model_prediction);
    }
}

#[test]
fn worsen_round_then_explanation_round() {
    let e = engine();
    let mut s = e.create_session(e.session_config("r", 2), 0).unwrap();
    let rec = s.submit_round(&e, d(&WORSEN_DIET), 3000, None, 1).unwrap();
    assert_eq!((rec.fitness_before, rec.fitness_after), (50, 45));
    assert!(rec.explanation_shown.is_none() && rec.guidance_shown.is_none());
    assert_eq!(s.state().phase, Phase::ShowingOutcome);
    s.acknowledge(2).unwrap();
    assert_eq!((s.state().phase, s.state().round_number), (Phase::AwaitingDiet, 2));

    let rec = s.submit_round(&e, d(&WORSEN_DIET), 3000, None, 3).unwrap();
    assert!(rec.explanation_shown.is_some() || rec.guidance_shown.is_some());
    assert_eq!(s.state().phase, Phase::ShowingExplanation);
    let cf = rec.explanation_shown.unwrap();
    assert_eq!(cf.predicted.label, Label::Improve);
    assert_eq!(s.state().pending_explanations, vec![cf.clone()]);
    assert_eq!(s.state().latest_suggestion(), Some(&cf));
}

#[test]
fn fitness_clamps_at_100() {
    let e = engine();
    let mut c = e.session_config("c", 1);
    c.fitness_start = 98;
    let mut s = e.create_session(c, 0).unwrap();
    let rec = s.submit_round(&e, d(&IMPROVE_DIET), 10, None, 1).unwrap();
    assert_eq!(rec.fitness_after, 100);

    let mut c = e.session_config("c0", 1);
    c.fitness_start = 3;
    let mut s = e.create_session(c, 0).unwrap();
    assert_eq!(
        s.submit_round(&e, d(&WORSEN_DIET), 10, None, 1).unwrap().fitness_after,
        0
    );
}

#[test]
fn over_budget_is_rejected_without_consuming() {
    let e = engine();
    let mut s = e.create_session(e.session_config("b", 1), 0).unwrap();
    let before = s.state().clone();
    // cost 1 + 20 = 21
    let err = s.submit_round(&e, d(&[1, 0, 0, 0, 4]), 10, None, 1).unwrap_err();
    assert!(matches!(err, crate::Error::BudgetExceeded { cost: 21, budget: 20 }));
    assert_eq!(s.state(), &before);
    assert_eq!(s.events().len(), 1);
    assert!(s.submit_round(&e, d(&[9, 0, 0, 0, 0]), 10, None, 1).is_err());
}

#[test]
fn wrong_phase_errors() {
    let e = engine();
    let mut s = e.create_session(e.session_config("w", 1), 0).unwrap();
    assert!(matches!(s.acknowledge(1), Err(crate::Error::WrongPhase { .. })));
    s.submit_round(&e, d(&WORSEN_DIET), 1, None, 1).unwrap();
    assert!(matches!(
        s.submit_round(&e, d(&WORSEN_DIET), 1, None, 1),
        Err(crate::Error::WrongPhase { .. })
    ));
    assert!(s.submit_questionnaire(vec![3; 8], None, 2).is_err());
}

#[test]
fn final_round_goes_to_questionnaire_and_completes() {
    let e = engine();
    let mut s = e.create_session(e.session_config("f", 5), 0).unwrap();
    play_full(&e, &mut s);
    let st = s.state();
    assert_eq!(st.phase, Phase::Completed);
    assert_eq!(st.history.len(), 12);
    assert_eq!(st.round_number, 13);
    assert_eq!(st.probe_results.len(), 6);
    // completed is absorbing
    assert!(s.submit_round(&e, d(&WORSEN_DIET), 1, None, 9).is_err());
    assert!(s.acknowledge(9).is_err());
    assert!(s.answer_probes(&[Label::Worsen], 9).is_err());
}

#[test]
fn explanation_cadence() {
    let e = engine();
    for k in [1, 2, 3, 5] {
        let mut c = e.session_config(format!("k{k}"), 7);
        c.explanation_interval = k;
        let mut s = e.create_session(c, 0).unwrap();
        play_full(&e, &mut s);
        let rounds: Vec<u32> =
            s.events()
                .iter()
                .filter_map(|ev| match &ev.event {
                    EventKind::ExplanationIssued { round_number, .. }
                    | EventKind::GuidanceIssued { round_number, .. } => Some(*round_number),
                    _ => None,
                })
                .collect();
        let expected: Vec<u32> = (1..=12).filter(|r| r % k == 0).collect();
        assert_eq!(rounds, expected, "k = {k}");
    }
}

#[test]
fn replay_reproduces_state_after_json_round_trip() {
    let e = engine();
    let mut s = e.create_session(e.session_config("rp", 11), 0).unwrap();
    s.request_explanation(&e, None, crate::explainer::FeedbackConstraints::defaults(e.world()), 5)
        .unwrap();
    play_full(&e, &mut s);
    let text = jsonl::encode(s.events());
    assert_eq!(text.lines().count(), s.events().len());
    let parsed: Vec<GameEvent> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, s.events());
    let replayed = replay(&parsed).unwrap();
    assert_eq!(&replayed, s.state());
    let json_a = serde_json::to_string(&replayed).unwrap();
    let json_b = serde_json::to_string(s.state()).unwrap();
    assert_eq!(json_a, json_b);
}

#[test]
fn replay_rejects_bad_logs() {
    let e = engine();
    let mut s = e.create_session(e.session_config("bad", 3), 0).unwrap();
    s.submit_round(&e, d(&WORSEN_DIET), 1, None, 1).unwrap();
    s.acknowledge(2).unwrap();
    let events = s.events().to_vec();

    assert!(matches!(replay(&[]), Err(crate::Error::Corruption(_))));

    let mut gap = events.clone();
    gap.remove(2);
    assert!(matches!(replay(&gap), Err(crate::Error::Corruption(_))));

    let mut swapped = events.clone();
    swapped.swap(1, 2);
    assert!(replay(&swapped).is_err());

    assert!(replay(&events[1..]).is_err());

    let mut tampered = events.clone();
    if let EventKind::PredictionMade { fitness_after, .. } = &mut tampered[2].event {
        *fitness_after = 99;
    }
    assert!(replay(&tampered).is_err());

    let mut log = EventLog::new();
    log.append(events[0].clone()).unwrap();
    assert!(log.append(events[2].clone()).is_err());
}

#[test]
fn whatif_is_logged_but_not_scheduled() {
    let e = engine();
    let mut s = e.create_session(e.session_config("wi", 3), 0).unwrap();
    let out = s
        .request_explanation(
            &e,
            Some(d(&WORSEN_DIET)),
            crate::explainer::FeedbackConstraints::defaults(e.world()),
            1,
        )
        .unwrap();
    assert!(matches!(out, Explanation::Counterfactual(_)));
    assert_eq!(s.state().whatif_requests, 1);
    assert_eq!(s.events().last().unwrap().event.type_name(), "FEEDBACK_RECEIVED");
    assert_eq!(s.state().phase, Phase::AwaitingDiet);
}

#[test]
fn snapshot_plus_tail_recovers() {
    let e = engine();
    let mut s = e.create_session(e.session_config("snap", 8), 0).unwrap();
    s.submit_round(&e, d(&WORSEN_DIET), 1, None, 1).unwrap();
    let snapshot = s.state().clone();
    s.acknowledge(2).unwrap();
    s.submit_round(&e, d(&IMPROVE_DIET), 1, None, 3).unwrap();
    let resumed = Session::from_snapshot(snapshot, s.events().to_vec()).unwrap();
    assert_eq!(resumed.state(), s.state());
    assert_eq!(resumed.events(), s.events());
}

#[test]
fn jsonl_file_round_trip_and_torn_tail() {
    use std::io::Write;
    let e = engine();
    let mut s = e.create_session(e.session_config("io", 8), 0).unwrap();
    s.submit_round(&e, d(&WORSEN_DIET), 1, None, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = jsonl::log_path(dir.path(), s.id());
    let mut app = jsonl::Appender::open(&path).unwrap();
    app.append(s.events()).unwrap();
    assert_eq!(jsonl::read_events(&path).unwrap(), s.events());

    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(b"{\"seq\":4,\"times").unwrap();
    let log = jsonl::read_log(&path).unwrap();
    assert!(log.torn_tail);
    assert_eq!(log.events, s.events());
    assert!(jsonl::read_events(&path).is_err());
}
