// Inference FLOPs of the four encoders.

use ris_vi::harness::{flop_count, layer_flops, EncoderSide};
use ris_vi::inference::EstimatorKind;

pub fn run(m: u64, n: u64, n_p: u64) -> Vec<(String, u64)> {
    let mut rows = Vec::new();
    for (kind, name) in [(EstimatorKind::Jce, "JCE"), (EstimatorKind::Jcce, "JCCE")] {
        for (side, enc) in [(EncoderSide::F, "F"), (EncoderSide::G, "G")] {
            rows.push((format!("{name} encoder {enc}"), flop_count(kind, side, m, n, n_p)));
        }
    }
    rows
}

#[allow(dead_code)]
fn main() {
    let (m, n, n_p) = (4, 64, 50);
    println!("M = {m}, N = {n}, N_p = {n_p}");
    for (label, flops) in run(m, n, n_p) {
        println!("{label:<16} {flops:>16}");
    }
    // the constant term is the hidden-layer cost at keep rate 0.9
    println!("hidden-layer constant: {}", layer_flops(0.0, 0.0, 0.9, 300.0, 300.0));
}
