use std::collections::BTreeMap;
use std::time::Duration;

use attune_core::clock::VirtualTime;
use attune_core::ingest::{EcgSample, ImuSample};
use attune_core::intervention::{
    Decision, InterventionConfig, InterventionEngine, InterventionStatus, ParsedIntervention,
};
use attune_core::perception::{
    format_insight_line, parse_insight_line, ActivityClass, Criticality, InsightFields,
};
use attune_core::physio::{
    classify_stress, compute_pnn50, count_steps, detect_r_peaks, RrSeries, REFRACTORY_MS,
};
use attune_core::prompts::PromptCatalog;
use attune_core::tca::{effective_tone, ToneLevel};
use proptest::prelude::*;

const WINDOW: (VirtualTime, VirtualTime) = (VirtualTime(0), VirtualTime(3_600_000));

fn criticality() -> impl Strategy<Value = Criticality> {
    prop_oneof![
        Just(Criticality::Low),
        Just(Criticality::Mid),
        Just(Criticality::High)
    ]
}

fn tone() -> impl Strategy<Value = ToneLevel> {
    prop_oneof![
        Just(ToneLevel::HighlyMotivational),
        Just(ToneLevel::ModeratelyMotivational),
        Just(ToneLevel::NeutralSubtle)
    ]
}

fn parsed(n: usize) -> ParsedIntervention {
    ParsedIntervention {
        analysis: format!("analysis {n}"),
        task_improvement: None,
        immediate_action: format!("action {n}"),
        follow_up: format!("follow-up {n}"),
    }
}

proptest! {
    #[test]
    fn pnn50_ignores_constant_offsets(
        rr in prop::collection::vec(400u32..1500, 2..200),
        shift in -100i32..100,
    ) {
        let a: Vec<f64> = rr.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = rr.iter().map(|&x| (x as i32 + shift) as f64).collect();
        let pa = compute_pnn50(&RrSeries::new(WINDOW, &a)).unwrap();
        let pb = compute_pnn50(&RrSeries::new(WINDOW, &b)).unwrap();
        prop_assert_eq!(pa, pb);
        prop_assert!((0.0..=100.0).contains(&pa));
    }

    #[test]
    fn stress_is_monotone_in_pnn50(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_stress(lo) >= classify_stress(hi));
    }

    #[test]
    fn r_peaks_respect_the_refractory_period(
        values in prop::collection::vec(-2.0f64..2.0, 200..2000),
    ) {
        let samples: Vec<EcgSample> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| EcgSample { timestamp: VirtualTime(i as u64 * 5), value: v })
            .collect();
        if let Ok(peaks) = detect_r_peaks(&samples) {
            for w in peaks.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 + REFRACTORY_MS);
            }
        }
    }

    #[test]
    fn step_counts_add_over_split_windows(
        cadence_hz in 1.0f64..2.5,
        amplitude in 0.0f64..6.0,
        seconds in 5u64..60,
        split in 0.0f64..1.0,
    ) {
        let samples: Vec<ImuSample> = (0..seconds * 50)
            .map(|i| {
                let t = i as f64 * 0.02;
                let z = 9.81 + amplitude * (2.0 * std::f64::consts::PI * cadence_hz * t).sin();
                ImuSample { timestamp: VirtualTime(i * 20), accel: [0.1, 0.2, z] }
            })
            .collect();
        let end = VirtualTime(seconds * 1000);
        let mid = VirtualTime((split * end.0 as f64) as u64);
        let whole = count_steps(&samples, (VirtualTime(0), end));
        let parts = count_steps(&samples, (VirtualTime(0), mid)) + count_steps(&samples, (mid, end));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn insight_lines_round_trip(
        desc in "[a-z][a-z ]{0,30}[a-z]",
        class in prop::sample::select(ActivityClass::ALL.to_vec()),
        crit in criticality(),
        surrounding in "[a-z][a-z ,]{0,40}[a-z]",
    ) {
        let collapse = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let fields = InsightFields {
            activity_description: collapse(&desc),
            activity_class: class,
            criticality: crit,
            surrounding: collapse(&surrounding),
        };
        let line = format_insight_line(&fields);
        prop_assert_eq!(parse_insight_line(&line).unwrap(), fields);
    }

    #[test]
    fn each_intervention_is_delivered_at_most_once(
        steps in prop::collection::vec((0u8..4, prop::option::of(criticality())), 1..120),
    ) {
        let config = InterventionConfig {
            interval: Duration::from_secs(15 * 60),
            ..InterventionConfig::default()
        };
        let mut engine = InterventionEngine::new(PromptCatalog::embedded(), config);
        let mut deliveries: BTreeMap<String, usize> = BTreeMap::new();
        let mut admitted = 0;
        for (minute, (op, crit)) in steps.into_iter().enumerate() {
            let now = VirtualTime((minute as u64 + 1) * 60_000);
            let transitions = match op {
                0 if engine.check_cadence(now).is_ok() => {
                    admitted += 1;
                    engine.admit_and_gate(parsed(admitted), crit, now).unwrap().1
                }
                1 => {
                    let delivered = engine
                        .with_status(InterventionStatus::Delivered)
                        .next()
                        .map(|iv| iv.id.clone());
                    if let Some(id) = delivered {
                        engine.decide(&id, Decision::Accepted, now).unwrap();
                    }
                    Vec::new()
                }
                0 => Vec::new(),
                _ => engine.regate_held(crit, now).into_iter().collect(),
            };
            for tr in transitions {
                if tr.to == InterventionStatus::Delivered {
                    prop_assert_ne!(crit, Some(Criticality::High));
                    *deliveries.entry(tr.id).or_default() += 1;
                }
            }
        }
        prop_assert!(deliveries.values().all(|&n| n == 1));
        for iv in engine.all() {
            prop_assert_eq!(iv.delivered_at.is_some(), deliveries.contains_key(&iv.id));
        }
    }

    #[test]
    fn tone_never_rises_within_a_conversation(base in tone(), turn in 1u32..200) {
        prop_assert!(effective_tone(base, turn + 1) <= effective_tone(base, turn));
        prop_assert!(effective_tone(base, turn) <= base);
    }
}
