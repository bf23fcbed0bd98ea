use ovr_core::complexity::{bench_realtime_factor, cost_report, MacConvention};
use ovr_core::model::{FtJnf, ModelConfig, Variant, WeightSet};
use ovr_core::{Stft, StftConfig};

#[test]
fn realtime_factor_is_a_rate() {
    let stft = Stft::new(StftConfig::default());
    let cfg = ModelConfig::from_variant(Variant::S, 2, 257).unwrap();
    let model = FtJnf::new(cfg, WeightSet::init(&cfg, 0)).unwrap();
    let short = bench_realtime_factor(&model, &stft, 1.0, 5).unwrap();
    let long = bench_realtime_factor(&model, &stft, 2.0, 5).unwrap();
    assert!(short > 0.0 && long > 0.0);
    let change = (long - short).abs() / short;
    assert!(change < 0.2, "RF {short:.4} at 1 s, {long:.4} at 2 s");
}

#[test]
fn one_mic_model_is_cheaper() {
    let stft = StftConfig::default();
    let two = cost_report(&ModelConfig::from_variant(Variant::M, 2, 257).unwrap(), &stft, MacConvention::Profiler);
    let one = cost_report(&ModelConfig::from_variant(Variant::M, 1, 257).unwrap(), &stft, MacConvention::Profiler);
    assert!(one.params < two.params && one.macs_per_second < two.macs_per_second);
    let matmul = cost_report(&ModelConfig::from_variant(Variant::M, 2, 257).unwrap(), &stft, MacConvention::MatmulOnly);
    assert!(matmul.macs_per_second < two.macs_per_second);
    assert_eq!(matmul.params, two.params);
}
