use ovr_core::metrics::{evaluate_grid, lsd, score_item, EvalItem, ModelEnhancer, PassThrough, EVAL_SNRS_DB};
use ovr_core::mixer::{NoiseCapture, NoiseMode};
use ovr_core::model::{FtJnf, ModelConfig, WeightSet};
use ovr_core::synth::{babble_like_noise, white_noise, SyntheticTalker};
use ovr_core::{OvrError, Stft, StftConfig, Waveform};

fn item(i: u64, stft: &Stft) -> EvalItem {
    let (outer, inear, _) = SyntheticTalker::random("t", 100 + i).recording(1.0, stft, i).unwrap();
    let n = outer.len();
    let noise = NoiseCapture::new(babble_like_noise(n, 16_000, 7 * i), white_noise(n, 16_000, 7 * i + 1)).unwrap();
    EvalItem {
        id: format!("u{i:02}"),
        own_outer: outer,
        own_inear: inear,
        noise,
        mode: NoiseMode::Point(0),
        seed: i,
    }
}

#[test]
fn lsd_grows_as_snr_falls() {
    let stft = Stft::new(StftConfig::default());
    let items: Vec<_> = (0..20).map(|i| item(i, &stft)).collect();
    let snrs = [25.0, 10.0, 5.0, 0.0, -5.0, -10.0];
    let mut means = vec![0.0; snrs.len()];
    let mut violations = 0;
    for it in &items {
        let scores: Vec<f64> = snrs.iter().map(|&s| score_item(&PassThrough, it, s, &stft).unwrap()).collect();
        violations += scores.windows(2).filter(|w| w[1] < w[0]).count();
        for (m, s) in means.iter_mut().zip(&scores) {
            *m += s / items.len() as f64;
        }
    }
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    assert_eq!(violations, 0, "{means:?}");
}

#[test]
fn identity_model_at_negligible_noise_scores_near_zero() {
    let stft = Stft::new(StftConfig::default());
    let cfg = ModelConfig::new(4, 4, 2, 257).unwrap();
    let mut weights = WeightSet::zeros(&cfg);
    weights.dense.b[0] = 40.0;
    let model = FtJnf::new(cfg, weights).unwrap();
    let enhancer = ModelEnhancer { model: &model, stft: &stft };
    let it = item(3, &stft);
    let v = score_item(&enhancer, &it, 300.0, &stft).unwrap();
    assert!(v < 1e-3, "{v}");
    assert!(score_item(&enhancer, &it, 0.0, &stft).unwrap() > 1.0);
}

#[test]
fn report_has_one_row_per_utterance_and_snr() {
    let stft = Stft::new(StftConfig::default());
    let items = (0..3)
        .map(|i| (format!("u{i:02}"), Ok(item(i, &stft))))
        .chain(std::iter::once(("bad".to_string(), Err(OvrError::Empty("missing file".into())))));
    let report = evaluate_grid(&PassThrough, items, &EVAL_SNRS_DB, &stft);
    assert_eq!(report.rows.len(), 4 * EVAL_SNRS_DB.len());
    assert_eq!(report.failed_rows, EVAL_SNRS_DB.len());
    assert!(report.rows.iter().filter(|r| r.utterance_id == "bad").all(|r| r.error.is_some()));

    let scored: Vec<f64> = report.rows.iter().filter_map(|r| r.lsd_db).collect();
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    assert!((report.mean_lsd_db.unwrap() - mean).abs() < 1e-12);
    for (snr, v) in &report.mean_lsd_by_snr {
        let col: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| format!("{}", r.snr_db) == *snr)
            .filter_map(|r| r.lsd_db)
            .collect();
        assert!((v - col.iter().sum::<f64>() / col.len() as f64).abs() < 1e-12);
    }
    assert_eq!(report.mean_lsd_by_utterance.len(), 3);
}

#[test]
fn lsd_of_a_scaled_copy_is_twenty_log_of_the_scale() {
    let stft = Stft::new(StftConfig::default());
    let x = white_noise(16_000, 16_000, 5);
    for scale in [0.5, 2.0, 10.0] {
        let y = Waveform::new(x.samples.iter().map(|v| v * scale).collect(), 16_000);
        let expected = 20.0 * f64::log10(scale);
        assert!((lsd(&x, &y, &stft).unwrap() - expected.abs()).abs() < 1e-4);
    }
}
