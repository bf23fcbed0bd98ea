use ovr_core::mixer::{
    measure_snr, mix_at_snr, spatialize, spatialize_unnormalized, IrSet, MixSpec, NoiseCapture, NoiseMode,
};
use ovr_core::Waveform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(len: usize, seed: u64, amp: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(), 16_000)
}

fn power_ratio_db(s: &[f64], v: &[f64]) -> f64 {
    let es: f64 = s.iter().map(|x| x * x).sum();
    let ev: f64 = v.iter().map(|x| x * x).sum();
    10.0 * (es / ev).log10()
}

#[test]
fn snr_round_trips_over_the_grid() {
    let irs = IrSet::synthetic(3, 64, 16_000);
    let own_outer = random(24_000, 1, 0.3);
    let own_inear = random(24_000, 2, 0.1);
    for mode in [NoiseMode::Point(0), NoiseMode::Point(6), NoiseMode::PseudoDiffuse] {
        let sources: Vec<Waveform> = (0..mode.num_sources()).map(|i| random(10_000, 10 + i as u64, 1.0)).collect();
        let refs: Vec<&Waveform> = sources.iter().collect();
        let noise = spatialize(&refs, &irs, mode).unwrap();
        for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 25.0] {
            let spec = MixSpec { snr_db: snr, mode, seed: 4 };
            let mix = mix_at_snr(&own_outer, &own_inear, &noise, &spec).unwrap();
            let measured = measure_snr(&own_outer, &mix.noise.outer).unwrap();
            assert!((measured - snr).abs() < 0.01, "{mode:?} {snr}: {measured}");
            // the mixture really is own + scaled noise
            for i in [0, 777, 23_999] {
                assert!((mix.outer.samples[i] - own_outer.samples[i] - mix.noise.outer.samples[i]).abs() < 1e-12);
                assert!((mix.inear.samples[i] - own_inear.samples[i] - mix.noise.inear.samples[i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn same_gain_on_both_noise_channels() {
    let irs = IrSet::synthetic(5, 64, 16_000);
    let src = random(8000, 6, 1.0);
    let noise = spatialize(&[&src], &irs, NoiseMode::Point(2)).unwrap();
    let own = random(8000, 7, 0.5);
    let mix = mix_at_snr(&own, &own, &noise, &MixSpec { snr_db: 3.0, mode: NoiseMode::Point(2), seed: 0 }).unwrap();
    let before = power_ratio_db(&noise.outer.samples, &noise.inear.samples);
    let after = power_ratio_db(&mix.noise.outer.samples, &mix.noise.inear.samples);
    assert!((before - after).abs() < 1e-9);
    for (a, b) in mix.noise.outer.samples.iter().zip(&noise.outer.samples) {
        assert!((a - mix.gain * b).abs() < 1e-12);
    }
}

#[test]
fn mixing_is_deterministic_per_seed() {
    let irs = IrSet::synthetic(1, 64, 16_000);
    let src = random(3000, 8, 1.0);
    let noise = spatialize(&[&src], &irs, NoiseMode::Point(1)).unwrap();
    let own = random(5000, 9, 0.5);
    let spec = |seed| MixSpec { snr_db: 0.0, mode: NoiseMode::Point(1), seed };
    let a = mix_at_snr(&own, &own, &noise, &spec(11)).unwrap();
    let b = mix_at_snr(&own, &own, &noise, &spec(11)).unwrap();
    let c = mix_at_snr(&own, &own, &noise, &spec(12)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.outer, c.outer);
}

#[test]
fn measure_snr_matches_power_ratio() {
    for seed in 0..10 {
        let s = random(1234, seed, 1.0);
        let v = random(1234, seed + 100, 0.37);
        let m = measure_snr(&s, &v).unwrap();
        assert!((m - power_ratio_db(&s.samples, &v.samples)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spatialize_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0, diffuse in any::<bool>()) {
        let irs = IrSet::synthetic(seed, 64, 16_000);
        let mode = if diffuse { NoiseMode::PseudoDiffuse } else { NoiseMode::Point((seed % 8) as usize) };
        let n = mode.num_sources();
        let xs: Vec<Waveform> = (0..n).map(|i| random(300, seed ^ i as u64, 1.0)).collect();
        let ys: Vec<Waveform> = (0..n).map(|i| random(300, seed.wrapping_add(1000 + i as u64), 1.0)).collect();
        let combo: Vec<Waveform> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| Waveform::new(x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(), 16_000))
            .collect();
        let render = |w: &[Waveform]| -> NoiseCapture {
            let refs: Vec<&Waveform> = w.iter().collect();
            spatialize_unnormalized(&refs, &irs, mode).unwrap()
        };
        let (l, rx, ry) = (render(&combo), render(&xs), render(&ys));
        for i in 0..300 {
            prop_assert!((l.outer.samples[i] - a * rx.outer.samples[i] - b * ry.outer.samples[i]).abs() < 1e-10);
            prop_assert!((l.inear.samples[i] - a * rx.inear.samples[i] - b * ry.inear.samples[i]).abs() < 1e-10);
        }
    }
}
