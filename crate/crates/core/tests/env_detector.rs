mod common;

use onlinefilter::agents::{EpsilonSchedule, QConfig, Snapshot};
use onlinefilter::dataset::NamedImage;
use onlinefilter::detector::{
    build_oracle_table, Detector, DetectorError, OracleTable, ProbVector, RemoteDetector,
    SurrogateConfig, SurrogateDetector, PPM_CONTENT_TYPE,
};
use onlinefilter::env::{quantize_reward, run_round, EnvConfig, EnvError, NoiseMix, RewardConfig};
use onlinefilter::filters::{apply_action, apply_noise, FilterParams};
use onlinefilter::raster::{read_ppm, rmse, Raster};
use onlinefilter::sensing::sense_state;
use onlinefilter::texgen::{generate, TexSpec};
use onlinefilter::{Action, Agent, AgentState, LinUcbAgent, NoiseKind, QTableAgent};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

/// Always plays one action and remembers every update it receives.
struct Fixed {
    action: Action,
    seen: Vec<(AgentState, Option<AgentState>)>,
}

impl Fixed {
    fn new(action: Action) -> Self {
        Self {
            action,
            seen: Vec::new(),
        }
    }
}

impl Agent for Fixed {
    fn select(&mut self, _: &AgentState) -> Result<Action, onlinefilter::agents::AgentError> {
        Ok(self.action)
    }

    fn update(&mut self, s: &AgentState, _: Action, _: i32, next: Option<&AgentState>) {
        self.seen.push((*s, next.copied()));
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Linucb(LinUcbAgent::new(1.0).unwrap())
    }
}

fn textures(count: usize) -> Vec<NamedImage> {
    generate(&TexSpec {
        count,
        width: 24,
        height: 24,
        ..Default::default()
    })
}

fn setup(set: &[NamedImage]) -> (SurrogateDetector, OracleTable) {
    let det = SurrogateDetector::new(SurrogateConfig::default(), set).unwrap();
    let table = build_oracle_table(set, &det, 2).unwrap();
    (det, table)
}

fn cfg_with(mix: NoiseMix, seed: u64) -> EnvConfig {
    let mut cfg = EnvConfig::default();
    cfg.stream.noise_mix = mix;
    cfg.stream.seed = seed;
    cfg
}

#[test]
fn clean_stream_with_idle_agent_earns_full_reward() {
    let set = textures(6);
    let (det, table) = setup(&set);
    let cfg = cfg_with(NoiseMix::only(NoiseKind::Clean), 1);
    let mut agent = Fixed::new(Action::None);
    let recs = run_round(
        &mut agent,
        &set,
        &table,
        &det,
        &cfg,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(recs.len(), 6);
    for r in &recs {
        assert_eq!(r.reward, 2);
        assert_eq!(r.denoise_pr, r.baseline_pr);
        assert_eq!(r.baseline_pr, r.oracle_pr);
        assert!(r.accurate);
    }
}

#[test]
fn prefetch_aligns_next_states() {
    let set = textures(3);
    let (det, table) = setup(&set);
    let mut cfg = cfg_with(NoiseMix::default(), 4);
    cfg.stream.prefetch_next = true;
    let mut agent = Fixed::new(Action::Deblur);
    let recs = run_round(
        &mut agent,
        &set,
        &table,
        &det,
        &cfg,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    // Re-derive each record's noisy state from its logged noise kind.
    let sensed: Vec<AgentState> = recs
        .iter()
        .map(|r| {
            let orig = &set.iter().find(|n| n.name == r.image_name).unwrap().image;
            sense_state(
                &apply_noise(orig, r.noise, &cfg.filters).unwrap(),
                &cfg.sense,
            )
        })
        .collect();
    assert_eq!(recs[0].next_state, Some(sensed[1]));
    assert_eq!(recs[1].next_state, Some(sensed[2]));
    assert_eq!(recs[2].next_state, None);
    let passed: Vec<_> = agent.seen.iter().map(|(_, n)| *n).collect();
    assert_eq!(passed, [Some(sensed[1]), Some(sensed[2]), None]);
}

#[test]
fn prefetch_off_passes_terminal() {
    let set = textures(3);
    let (det, table) = setup(&set);
    let cfg = cfg_with(NoiseMix::default(), 4);
    let mut agent = Fixed::new(Action::None);
    run_round(
        &mut agent,
        &set,
        &table,
        &det,
        &cfg,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    assert!(agent.seen.iter().all(|(_, n)| n.is_none()));
}

#[test]
fn single_dark_image_reward_matches_scalar_oracle() {
    let set = textures(1);
    let (det, table) = setup(&set);
    let cfg = cfg_with(NoiseMix::only(NoiseKind::Dark), 2);
    let mut agent = Fixed::new(Action::StrongWhiten);
    let recs = run_round(
        &mut agent,
        &set,
        &table,
        &det,
        &cfg,
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let p = FilterParams::default();
    let orig = &set[0].image;
    let restored = apply_action(
        &apply_noise(orig, NoiseKind::Dark, &p).unwrap(),
        Action::StrongWhiten,
        &p,
    )
    .unwrap();
    let d = rmse(&restored, orig).unwrap();
    // Surrogate and reward ladder written out by hand.
    let p_true = 0.1 + (0.68 - 0.1) * (-12.0 * d / 255.0).exp();
    let expect = (2.0 + ((p_true - 0.68) / 0.05).floor()).clamp(-6.0, 2.0) as i32;
    assert_eq!(recs[0].reward, expect);
    assert!((recs[0].denoise_pr - p_true).abs() < 1e-12);
    // Threshold rmse for delta > -pd.
    let rmse_star = -255.0 / 12.0 * (1.0f64 - 0.05 / 0.58).ln();
    assert_eq!(
        d <= rmse_star,
        recs[0].reward >= 1,
        "rmse {d} threshold {rmse_star}"
    );
}

fn q_agent(seed: u64) -> QTableAgent {
    QTableAgent::new(QConfig {
        epsilon: EpsilonSchedule {
            start: 0.3,
            end: 0.01,
            decay_steps: 30,
        },
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn replay_is_deterministic_and_records_hold_invariants() {
    let set = textures(12);
    let (det, table) = setup(&set);
    let mut cfg = cfg_with(
        NoiseMix {
            clean: 1.0,
            ..Default::default()
        },
        9,
    );
    cfg.stream.prefetch_next = true;
    let play = || {
        let mut agent = q_agent(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut out = Vec::new();
        for round in 1..=4 {
            let first = out.len() as u64 + 1;
            out.extend(
                run_round(&mut agent, &set, &table, &det, &cfg, round, first, &mut rng).unwrap(),
            );
        }
        out
    };
    let a = play();
    assert_eq!(a, play());
    assert_eq!(
        a.iter().map(|r| r.iter).collect::<Vec<_>>(),
        (1..=48).collect::<Vec<_>>()
    );
    for r in &a {
        assert!((-6..=2).contains(&r.reward));
        assert_eq!(Some(r.oracle_pr), table.get(&r.image_name));
        assert_eq!(
            r.accurate,
            onlinefilter::filters::is_accurate(r.noise, r.action, false)
        );
        for p in [r.baseline_pr, r.denoise_pr, r.oracle_pr] {
            assert!((0.0..=1.0).contains(&p));
        }
        let orig = &set.iter().find(|n| n.name == r.image_name).unwrap().image;
        let noisy = apply_noise(orig, r.noise, &cfg.filters).unwrap();
        let fixed = apply_action(&noisy, r.action, &cfg.filters).unwrap();
        if rmse(&fixed, orig).unwrap() < rmse(&noisy, orig).unwrap() {
            assert!(r.denoise_pr > r.baseline_pr);
        }
        if r.action == Action::None {
            assert_eq!(r.denoise_pr, r.baseline_pr);
        }
    }
}

#[test]
fn missing_oracle_entry_is_reported() {
    let set = textures(3);
    let (det, mut table) = setup(&set);
    table.entries.remove(&set[1].name);
    let err = run_round(
        &mut Fixed::new(Action::None),
        &set,
        &table,
        &det,
        &EnvConfig::default(),
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap_err();
    assert!(matches!(err, EnvError::MissingOracle(n) if n == set[1].name));
}

/// Surrogate that starts failing after a fixed number of calls.
struct Flaky {
    inner: SurrogateDetector,
    left: AtomicUsize,
}

impl Detector for Flaky {
    fn infer(&self, img: &Raster, name: &str) -> Result<ProbVector, DetectorError> {
        if self.left.fetch_sub(1, Ordering::SeqCst) == 0 {
            return Err(DetectorError::Transport("connection reset".into()));
        }
        self.inner.infer(img, name)
    }
}

#[test]
fn detector_failure_names_the_iteration() {
    let set = textures(4);
    let (det, table) = setup(&set);
    // Two calls per iteration with a non-None action: the fifth call is iteration 3.
    let flaky = Flaky {
        inner: det,
        left: AtomicUsize::new(4),
    };
    let err = run_round(
        &mut Fixed::new(Action::Deblur),
        &set,
        &table,
        &flaky,
        &EnvConfig::default(),
        1,
        1,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap_err();
    assert!(matches!(err, EnvError::Detector { iter: 3, .. }), "{err}");
}

#[test]
fn reward_examples() {
    let cfg = RewardConfig::default();
    assert_eq!(quantize_reward(0.68, 0.68, &cfg), 2);
    assert_eq!(quantize_reward(0.64, 0.68, &cfg), 1);
    assert_eq!(quantize_reward(0.10, 0.68, &cfg), -6);
}

#[test]
fn surrogate_decreases_along_noise_ladder() {
    let set = textures(1);
    let (det, _) = setup(&set);
    let orig = &set[0].image;
    let name = &set[0].name;
    assert!((det.correct_prob(orig, name).unwrap() - 0.68).abs() < 1e-12);
    let mut ladder: Vec<(f64, f64)> = [0.9, 0.75, 0.6, 0.45, 0.3, 0.2]
        .iter()
        .map(|&g| {
            let img = onlinefilter::raster::gamma_map(orig, g).unwrap();
            (
                rmse(&img, orig).unwrap(),
                det.correct_prob(&img, name).unwrap(),
            )
        })
        .collect();
    ladder.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in ladder.windows(2) {
        assert!(w[0].0 < w[1].0 && w[0].1 > w[1].1, "{ladder:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surrogate_output_is_a_distribution(
        px in proptest::collection::vec(any::<u8>(), 24 * 24 * 3),
        classes in 2usize..40,
        decay in 0.1f64..50.0,
    ) {
        let set = textures(1);
        let cfg = SurrogateConfig { class_count: classes, p_oracle: 0.99, decay };
        let det = SurrogateDetector::new(cfg, &set).unwrap();
        let img = Raster::new(24, 24, px).unwrap();
        let pv = det.infer(&img, &set[0].name).unwrap();
        prop_assert_eq!(pv.class_count(), classes);
        prop_assert!(pv.probs().iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((pv.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

fn uniform_json(classes: usize) -> String {
    let p = vec![1.0 / classes as f64; classes];
    serde_json::json!({"class_count": classes, "probs": p, "model": "mock"}).to_string()
}

#[test]
fn remote_client_speaks_the_wire_format() {
    let svc = common::serve(|path, body| {
        if path != "/infer" {
            return (404, "{}".into());
        }
        // The body must be a decodable PPM.
        match read_ppm(body) {
            Ok(_) => (200, uniform_json(4)),
            Err(_) => (400, r#"{"error":"bad image"}"#.into()),
        }
    });
    let det = RemoteDetector::new(format!("{}/", svc.url), Duration::from_secs(5));
    assert_eq!(det.base_url(), svc.url);
    let img = Raster::uniform(8, 8, [10, 20, 30]).unwrap();
    let pv = det.infer(&img, "x.ppm").unwrap();
    assert_eq!(pv.probs(), [0.25; 4]);
    assert_eq!(PPM_CONTENT_TYPE, "image/x-portable-pixmap");
}

#[test]
fn remote_client_rejects_bad_sums_and_status() {
    let svc = common::serve(|_, _| {
        (
            200,
            r#"{"class_count":3,"probs":[0.5,0.3,0.2001],"model":"m"}"#.into(),
        )
    });
    let det = RemoteDetector::new(svc.url.clone(), Duration::from_secs(5));
    let img = Raster::uniform(8, 8, [0; 3]).unwrap();
    assert!(matches!(
        det.infer(&img, "a"),
        Err(DetectorError::InvalidProbability(_))
    ));

    let svc = common::serve(|_, _| {
        (
            200,
            r#"{"class_count":3,"probs":[0.5,0.5],"model":"m"}"#.into(),
        )
    });
    let det = RemoteDetector::new(svc.url.clone(), Duration::from_secs(5));
    assert!(matches!(
        det.infer(&img, "a"),
        Err(DetectorError::InvalidProbability(_))
    ));

    let svc = common::serve(|_, _| (503, r#"{"error":"loading"}"#.into()));
    let det = RemoteDetector::new(svc.url.clone(), Duration::from_secs(5));
    assert!(matches!(det.infer(&img, "a"), Err(DetectorError::Protocol(m)) if m.contains("503")));
}

#[test]
fn remote_client_reports_transport_failures() {
    let det = RemoteDetector::new(common::dead_url(), Duration::from_secs(2));
    let img = Raster::uniform(8, 8, [0; 3]).unwrap();
    assert!(matches!(
        det.infer(&img, "a"),
        Err(DetectorError::Transport(_))
    ));
}

#[test]
fn oracle_build_against_remote_service() {
    let svc = common::serve(|_, _| (200, uniform_json(5)));
    let det = RemoteDetector::new(svc.url.clone(), Duration::from_secs(5));
    let set = textures(3);
    let table = build_oracle_table(&set, &det, 3).unwrap();
    assert_eq!(table.len(), 3);
    assert!(table.entries.values().all(|&p| (p - 0.2).abs() < 1e-12));
    assert_eq!(svc.hits.load(Ordering::SeqCst), 3);

    let down = RemoteDetector::new(common::dead_url(), Duration::from_secs(2));
    let err = build_oracle_table(&set, &down, 1).unwrap_err();
    assert!(
        matches!(err, DetectorError::ForImage { ref name, .. } if *name == set[0].name),
        "{err}"
    );
}
