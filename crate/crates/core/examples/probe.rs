use std::time::Instant;
use cdne::*;
fn main() {
    env_logger_free();
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = CdneConfig::default();
    if args.len() > 1 { cfg = CdneConfig::from_text(&std::fs::read_to_string(&args[1]).unwrap()).unwrap(); }
    let task = synth_transfer_task(&SynthParams::default()).unwrap();
    for gamma_zero in [false, true] {
        let mut c = cfg.clone();
        c.ablations.gamma_zero = gamma_zero;
        let t = Instant::now();
        let pair = run_cdne(&task, &c).unwrap();
        let el = t.elapsed();
        let iters: Vec<usize> = pair.source.layers.iter().chain(pair.target.layers.iter()).map(|l| l.trajectory.len()).collect();
        let r = evaluate_transfer(&task, pair.h_s(), pair.h_t(), &[0,1,2,3,4], 0.01, ThresholdPolicy::default(), LogisticConfig::default()).unwrap();
        let mc: Vec<(f64,f64)> = pair.target.layers.iter().map(|l| (l.initial_loss().mmd_c, l.final_loss().mmd_c)).collect();
        println!("gamma_zero={gamma_zero} time={el:?} iters={iters:?} micro={:.4}±{:.4} macro={:.4} mmd_c={mc:?}", r.micro_mean, r.micro_std, r.macro_mean);
    }
}
fn env_logger_free() {}
