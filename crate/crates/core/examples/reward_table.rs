//! Prints the mean reward of every (noise, action) pair on a texture set,
//! plus how the noisy images spread over agent states.

use onlinefilter::detector::{Detector, SurrogateConfig, SurrogateDetector};
use onlinefilter::env::{quantize_reward, RewardConfig};
use onlinefilter::filters::{apply_action, apply_noise, counter_action, FilterParams};
use onlinefilter::sensing::{measure, quantize, SenseConfig};
use onlinefilter::texgen::{generate, TexSpec};
use onlinefilter::{Action, NoiseKind};
use std::collections::BTreeMap;

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let set = generate(&TexSpec {
        seed,
        ..Default::default()
    });
    let det = SurrogateDetector::new(SurrogateConfig::default(), &set).unwrap();
    let fp = FilterParams::default();
    let sense = SenseConfig {
        brightness_ref: set.iter().map(|n| measure(&n.image).mean_gray).sum::<f64>()
            / set.len() as f64,
        ..Default::default()
    };
    println!("brightness_ref {:.2}", sense.brightness_ref);
    let rc = RewardConfig::default();
    let p_or = det.config().p_oracle;

    let mut states: BTreeMap<String, BTreeMap<&str, usize>> = BTreeMap::new();
    for kind in [
        NoiseKind::Clean,
        NoiseKind::Blur,
        NoiseKind::Dark,
        NoiseKind::White,
    ] {
        let mut sums = [0i64; 6];
        let mut best_ok = 0;
        let mut hist: BTreeMap<(i32, i32), usize> = BTreeMap::new();
        for img in &set {
            let noisy = apply_noise(&img.image, kind, &fp).unwrap();
            let f = measure(&noisy);
            let st = quantize(&f, &sense);
            *states
                .entry(format!("{st}"))
                .or_default()
                .entry(kind.as_str())
                .or_default() += 1;
            let rewards: Vec<i32> = Action::ALL
                .iter()
                .map(|&a| {
                    let out = apply_action(&noisy, a, &fp).unwrap();
                    quantize_reward(det.correct_prob(&out, &img.name).unwrap(), p_or, &rc)
                })
                .collect();
            for (s, r) in sums.iter_mut().zip(&rewards) {
                *s += *r as i64;
            }
            let c = counter_action(kind, false)[0].index();
            *hist.entry((rewards[0], rewards[c])).or_default() += 1;
            let best = (0..6).max_by_key(|&i| (rewards[i], -(i as i32))).unwrap();
            if counter_action(kind, false).contains(&Action::ALL[best]) {
                best_ok += 1;
            }
        }
        let means: Vec<String> = sums
            .iter()
            .map(|s| format!("{:6.2}", *s as f64 / set.len() as f64))
            .collect();
        println!(
            "{:6} {} best-is-counter {}/{}",
            kind.as_str(),
            means.join(" "),
            best_ok,
            set.len()
        );
        println!("       (none, counter) -> count: {hist:?}");
    }
    for (st, kinds) in &states {
        println!("{st:14} {kinds:?}");
    }
}
