use constel_core::conv::*;
use constel_core::field::{find_large_order, Prime};
use constel_core::support::{SparseVector, SupportSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let cfg = Config::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n_univ = 1i64 << 12;
    let a = SupportSet::new((0..16).map(|_| rng.gen_range(0..n_univ)).collect());
    let b = SupportSet::new((0..16).map(|_| rng.gen_range(0..n_univ)).collect());
    let c = SupportSet::new((0..16).map(|_| rng.gen_range(0..n_univ)).collect());
    let x = SparseVector::new(a.indices().iter().map(|&i| (i, rng.gen_range(-100i64..100))));
    let y = SparseVector::new(b.indices().iter().map(|&i| (i, rng.gen_range(-100i64..100))));
    let mut diffs = Vec::new();
    for &ci in c.indices() { for &bi in b.indices() { diffs.push(ci - bi); } }
    let t = SupportSet::new(diffs);
    println!("|T| = {}", t.len());

    let t0 = Instant::now();
    let cert = find_large_order(Prime::new(17).unwrap(), 1 << 14).unwrap();
    println!("cert: {:?} (d={})", t0.elapsed(), cert.field.degree());

    let t0 = Instant::now();
    let plan = PartialConvPlan::new(&a, &b, &c, &t, cert.clone(), &cfg).unwrap();
    println!("plan build: {:?} gates={}", t0.elapsed(), plan.gates);

    let t0 = Instant::now();
    let _r = plan.run(&x, &y).unwrap();
    println!("plan run: {:?}", t0.elapsed());

    let t0 = Instant::now();
    let full = partial_conv_with_superset(&a, &b, &c, &t, &x, &y, &cfg).unwrap();
    println!("full with_superset: {:?}", t0.elapsed());

    let t0 = Instant::now();
    let auto = partial_conv(&a, &b, &c, &x, &y, &cfg).unwrap();
    println!("auto (sumset) path: {:?}", t0.elapsed());
    assert_eq!(full, auto);
}
