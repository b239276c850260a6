use lcad_core::tensor::*;
use lcad_core::train::init_dictionary;
use lcad_core::lca::{encode, LcaConfig};
use lcad_core::corpus::{synth_graphic, preprocess, SynthSpec};
use std::time::Instant;

fn main() {
    let dict: Dictionary<f64> = init_dictionary(1, 64, 8, 3, 4);
    let img = preprocess(synth_graphic(&SynthSpec::from_seed(3), 64, 64), true);

    // correlate micro-benchmark
    let t = Instant::now();
    let n = 2000;
    let mut sink = 0.0;
    for _ in 0..n {
        let acts = correlate(&img, &dict).unwrap();
        sink += acts.get(0, 0, 0);
    }
    let dt = t.elapsed().as_secs_f64() / n as f64;
    let flops = 15.0 * 15.0 * 64.0 * 192.0 * 2.0;
    println!("correlate: {:.3} ms  ({:.2} GFLOP/s)  sink={sink:.3}", dt * 1e3, flops / dt / 1e9);

    // full encode at lambda 0.5
    let cfg = LcaConfig { lambda: 0.5, ..LcaConfig::default() };
    let t = Instant::now();
    let state = encode(&img, &dict, &cfg).unwrap();
    println!("encode: {:.1} ms, steps={}, converged={}", t.elapsed().as_secs_f64()*1e3, state.steps_taken, state.converged);
}
