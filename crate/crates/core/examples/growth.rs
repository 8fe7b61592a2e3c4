use constel_core::field::{Prime, find_large_order, Elem};
use constel_core::vandermonde::*;
use std::time::Instant;

fn main() {
    let cert = find_large_order(Prime::new(11).unwrap(), 1 << 11).unwrap();
    let ectx = cert.field.clone();
    let (mut pm, mut pi) = (0usize, 0usize);
    for n in [64usize, 128, 256, 512, 1024] {
        let t0 = Instant::now();
        let pts: Vec<Elem> = (0..n as u128).map(|i| ectx.pow(&cert.omega, i)).collect();
        let spec = VandermondeSpec::new(ectx.clone(), pts).unwrap();
        let m = build_vmul_circuit(&spec).unwrap().gate_count();
        let i = build_vinv_circuit(&spec).unwrap().gate_count();
        println!(
            "n={n:5} vmul={m:8} (r={:.2}) vinv={i:8} (r={:.2})  [{:?}]",
            if pm > 0 { m as f64 / pm as f64 } else { 0.0 },
            if pi > 0 { i as f64 / pi as f64 } else { 0.0 },
            t0.elapsed()
        );
        pm = m;
        pi = i;
    }
}
