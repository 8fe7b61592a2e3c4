//! The convolution engine: sparse-convolution circuits, partial convolution
//! through the reverse-mode derivative transform, exact integers via
//! Chinese-Remainder reconstruction, output-sensitive sumsets, and cyclic
//! wrappers.

use crate::circuit::{baur_strassen, Circuit, CircuitBuilder, GateRef, Label, Ns};
use crate::error::{Error, Result};
use crate::field::{find_large_order, sieve_primes_above, Elem, FieldCtx, LargeOrderCert};
use crate::support::{PartialConvResult, SparseVector, SupportSet};
use crate::vandermonde::{VandermondeSpec, VanderPlan};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Universe size below which sumsets are computed densely.
const SUMSET_DENSE_CUTOFF: i64 = 64;

/// Engine configuration, threaded through every solver.
#[derive(Clone, Debug, Default)]
pub struct Config {
    pub backend: Backend,
    /// Upper bound on concurrent per-prime computations; `0` or `1` is
    /// sequential. Results are merged in prime order regardless.
    pub threads: usize,
    /// Verify `A + B` containment in supersets by brute force.
    pub debug_verify_superset: bool,
    /// Route Vandermonde stages through the quadratic explicit-wiring
    /// circuits instead of the subproduct tree.
    pub dense_vandermonde: bool,
}

#[derive(Clone, Debug, Default)]
pub enum Backend {
    /// Extension fields `F_p^{p-1}` with certified large-order elements,
    /// one prime per CRT residue.
    #[default]
    Deterministic,
    /// A user-supplied prime field with a verified large-order generator;
    /// single-modulus fast path.
    PrimeOracle(Arc<LargeOrderCert>),
}

/// Facts about one partial-convolution call, for diagnostics.
#[derive(Clone, Debug, Default)]
pub struct ConvInfo {
    pub primes: Vec<u64>,
    pub point_count: usize,
    pub circuit_gates: Vec<usize>,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

// ---------------------------------------------------------------------------
// The bilinear sparse-convolution circuit (outputs on a sum superset)
// ---------------------------------------------------------------------------

/// Gate-level core: appends the convolution circuit for inputs on `a_set`
/// and `b_set` with outputs read at `t_out` (all three must be nonnegative;
/// `a_set + b_set` must be covered by `t_super`).
///
/// Returns the map from output index to gate.
#[allow(clippy::too_many_arguments)]
fn append_conv_core(
    b: &mut CircuitBuilder,
    cert: &LargeOrderCert,
    a_set: &SupportSet,
    b_set: &SupportSet,
    t_super: &SupportSet,
    t_out: &SupportSet,
    a_inputs: &BTreeMap<i64, GateRef>,
    b_inputs: &BTreeMap<i64, GateRef>,
    dense_vandermonde: bool,
) -> Result<BTreeMap<i64, GateRef>> {
    let ctx = cert.field.clone();
    let t_full = t_super.union(a_set).union(b_set).union(t_out);
    let lo = t_full.min().unwrap_or(0);
    if lo < 0 {
        return Err(Error::Precondition("convolution core requires nonnegative indices".into()));
    }
    let universe = (t_full.max().unwrap_or(0) + 1) as u128;
    if cert.order_lower_bound < universe {
        return Err(Error::OrderTooWeak { have: cert.order_lower_bound, need: universe });
    }

    // slot lookup within the point list
    let slot_of = |i: i64| t_full.indices().binary_search(&i).expect("member of t_full");

    // points omega^tau via a square table
    let max_tau = t_full.max().unwrap_or(0) as u64;
    let bits = 64 - max_tau.leading_zeros();
    let mut sq = Vec::with_capacity(bits as usize);
    let mut cur = cert.omega.clone();
    for _ in 0..bits.max(1) {
        sq.push(cur.clone());
        cur = ctx.mul(&cur, &cur);
    }
    let pow_tau = |tau: u64| -> Elem {
        let mut acc = ctx.one();
        for (k, s) in sq.iter().enumerate() {
            if tau >> k & 1 == 1 {
                acc = ctx.mul(&acc, s);
            }
        }
        acc
    };
    let points: Vec<Elem> = t_full.indices().iter().map(|&tau| pow_tau(tau as u64)).collect();
    let spec = VandermondeSpec::new(ctx.clone(), points)?;

    let t = t_full.len();
    let mut live_a = vec![false; t];
    for &i in a_set.indices() {
        live_a[slot_of(i)] = true;
    }
    let mut live_b = vec![false; t];
    for &i in b_set.indices() {
        live_b[slot_of(i)] = true;
    }
    let mut live_out = vec![false; t];
    for &i in t_out.indices() {
        live_out[slot_of(i)] = true;
    }

    let zero = b.zero();
    let recovered: Vec<(Label, GateRef)> = if dense_vandermonde {
        let vm = crate::vandermonde::build_vmul_dense_circuit(&spec)?;
        let vi = crate::vandermonde::build_vinv_dense_circuit(&spec)?;
        let mut full_bind_a: BTreeMap<Label, GateRef> =
            (0..t).map(|j| (Label::x(j as i64), zero)).collect();
        for &i in a_set.indices() {
            full_bind_a.insert(Label::x(slot_of(i) as i64), a_inputs[&i]);
        }
        let mut full_bind_b: BTreeMap<Label, GateRef> =
            (0..t).map(|j| (Label::x(j as i64), zero)).collect();
        for &i in b_set.indices() {
            full_bind_b.insert(Label::x(slot_of(i) as i64), b_inputs[&i]);
        }
        let ha = b.append_circuit(&vm, &full_bind_a)?;
        let hb = b.append_circuit(&vm, &full_bind_b)?;
        let prod: BTreeMap<Label, GateRef> = ha
            .iter()
            .zip(hb.iter())
            .map(|(&(l, ra), &(_, rb))| (l, b.mul(ra, rb)))
            .collect();
        b.append_circuit(&vi, &prod)?
    } else {
        let plan = VanderPlan::new(&spec)?;
        let mut xs_a: Vec<Option<GateRef>> = vec![None; t];
        for &i in a_set.indices() {
            xs_a[slot_of(i)] = Some(a_inputs[&i]);
        }
        let mut xs_b: Vec<Option<GateRef>> = vec![None; t];
        for &i in b_set.indices() {
            xs_b[slot_of(i)] = Some(b_inputs[&i]);
        }
        let ha = plan.append_power_sums(b, &xs_a)?;
        let hb = plan.append_power_sums(b, &xs_b)?;
        let vi = plan.point_mass_circuit(&live_out)?;
        let prod: BTreeMap<Label, GateRef> = ha
            .iter()
            .zip(hb.iter())
            .enumerate()
            .map(|(i, (&ra, &rb))| (Label::v(i as i64), b.mul(ra, rb)))
            .collect();
        b.append_circuit(&vi, &prod)?
    };
    let _ = (live_a, live_b);

    let mut out = BTreeMap::new();
    for (label, r) in recovered {
        debug_assert_eq!(label.ns, Ns::X);
        let idx = t_full.indices()[label.index as usize];
        if t_out.contains(idx) {
            out.insert(idx, r);
        }
    }
    Ok(out)
}

fn verify_sum_containment(a: &SupportSet, b: &SupportSet, t: &SupportSet) -> Result<()> {
    for &x in a.indices() {
        for &y in b.indices() {
            if !t.contains(x + y) {
                return Err(Error::SupersetViolation { missing: x + y });
            }
        }
    }
    Ok(())
}

/// Arithmetic circuit with inputs `x_a`, `y_b` and outputs
/// `z_c = sum_{a+b=c} x_a y_b` for every `c` in `t`, over the certified
/// field. Requires `a + b` to be covered by `t` and an order bound of at
/// least the universe size.
pub fn build_sparse_conv_circuit(
    a: &SupportSet,
    b: &SupportSet,
    t: &SupportSet,
    cert: &LargeOrderCert,
    cfg: &Config,
) -> Result<Circuit> {
    if cfg.debug_verify_superset {
        verify_sum_containment(a, b, t)?;
    }
    let mut builder = CircuitBuilder::new(cert.field.clone());
    let a_inputs: BTreeMap<i64, GateRef> =
        a.indices().iter().map(|&i| (i, builder.input(Label::x(i)))).collect();
    let b_inputs: BTreeMap<i64, GateRef> =
        b.indices().iter().map(|&i| (i, builder.input(Label::y(i)))).collect();
    if a.is_empty() || b.is_empty() {
        let zero = builder.zero();
        for &c in t.indices() {
            builder.mark_output(Label::z(c), zero);
        }
        return Ok(builder.finish());
    }
    let outs = append_conv_core(
        &mut builder,
        cert,
        a,
        b,
        t,
        t,
        &a_inputs,
        &b_inputs,
        cfg.dense_vandermonde,
    )?;
    for (&c, &r) in &outs {
        builder.mark_output(Label::z(c), r);
    }
    Ok(builder.finish().eliminate_dead())
}

// ---------------------------------------------------------------------------
// Partial convolution modulo a prime (the derivative pipeline)
// ---------------------------------------------------------------------------

/// A reusable single-modulus plan: the derivative circuit for fixed sets
/// `(A, B, C, T)` over a fixed certified field, evaluated many times with
/// different vector values.
pub struct PartialConvPlan {
    cert: Arc<LargeOrderCert>,
    circuit: Circuit,
    /// shift applied to B-indexed inputs: slot = lambda - b
    pub gates: usize,
}

impl PartialConvPlan {
    /// Build the Lemma-style pipeline: the bilinear circuit on
    /// `(-B, C, T)` (index-shifted to nonnegative), augmented with inputs
    /// `x_a` and the scalar `w = sum_{a in A∩T} x_a w_a`, then extended
    /// with all derivatives `dw/dz_c` by `baur_strassen`.
    pub fn new(
        a: &SupportSet,
        b: &SupportSet,
        c: &SupportSet,
        t: &SupportSet,
        cert: Arc<LargeOrderCert>,
        cfg: &Config,
    ) -> Result<PartialConvPlan> {
        if cfg.debug_verify_superset {
            verify_sum_containment(&b.negate(), c, t)?;
        }
        // shifts making all circuit indices nonnegative
        let lambda = b.max().unwrap_or(0).max(0);
        let mu = (-c.min().unwrap_or(0)).max(0);
        let neg_b = SupportSet::new(b.indices().iter().map(|&i| lambda - i).collect());
        let c_sh = c.shift(mu);
        let t_sh = t.shift(lambda + mu);

        let mut builder = CircuitBuilder::new(cert.field.clone());
        let y_inputs: BTreeMap<i64, GateRef> = b
            .indices()
            .iter()
            .map(|&i| (lambda - i, builder.input(Label::y(i))))
            .collect();
        let z_inputs: BTreeMap<i64, GateRef> =
            c.indices().iter().map(|&i| (i + mu, builder.input(Label::z(i)))).collect();
        for &i in a.indices() {
            builder.input(Label::x(i));
        }

        // the join set A ∩ T, in shifted coordinates
        let join = a.intersect(t);
        let join_sh = join.shift(lambda + mu);

        let w = if b.is_empty() || c.is_empty() || join.is_empty() {
            builder.zero()
        } else {
            let outs = append_conv_core(
                &mut builder,
                &cert,
                &neg_b,
                &c_sh,
                &t_sh,
                &join_sh,
                &y_inputs,
                &z_inputs,
                cfg.dense_vandermonde,
            )?;
            let zero = builder.zero();
            let mut acc = zero;
            for &aj in join.indices() {
                let wa = outs.get(&(aj + lambda + mu)).copied().unwrap_or(zero);
                let xa = builder.input(Label::x(aj));
                let term = builder.mul(xa, wa);
                acc = builder.add(acc, term);
            }
            acc
        };
        builder.mark_output(Label::w(0), w);
        let forward = builder.finish().eliminate_dead();
        let circuit = baur_strassen(&forward, Label::w(0))?;
        debug_assert!(circuit.validate());
        let gates = circuit.gate_count();
        Ok(PartialConvPlan { cert, circuit, gates })
    }

    /// Evaluate with concrete vectors; returns residues `(x*y)[c] mod p`
    /// keyed by `c` (prime field residues of the certified field).
    pub fn run(&self, x: &SparseVector, y: &SparseVector) -> Result<BTreeMap<i64, u64>> {
        let ctx = &self.cert.field;
        let p = ctx.characteristic();
        let mut values = Vec::with_capacity(self.circuit.inputs().len());
        for &(label, _) in self.circuit.inputs() {
            let v = match label.ns {
                Ns::X => x.get(label.index),
                Ns::Y => y.get(label.index),
                Ns::Z => 0,
                _ => unreachable!("unexpected input namespace"),
            };
            values.push(ctx.from_i64(v % p as i64));
        }
        let outs = self.circuit.eval_values(&values)?;
        let mut result = BTreeMap::new();
        for (&(label, _), val) in self.circuit.outputs().iter().zip(outs.iter()) {
            if label.ns == Ns::DZ {
                debug_assert!(
                    val[1..].iter().all(|&c| c == 0),
                    "derivative landed outside the prime subfield"
                );
                result.insert(label.index, val[0]);
            }
        }
        Ok(result)
    }
}

/// Shifted-universe size the pipeline will use for `(B, C, T)`.
fn shifted_universe(b: &SupportSet, c: &SupportSet, t: &SupportSet) -> u64 {
    let lambda = b.max().unwrap_or(0).max(0);
    let mu = (-c.min().unwrap_or(0)).max(0);
    let hi = (t.max().unwrap_or(0) + lambda + mu)
        .max(lambda - b.min().unwrap_or(0))
        .max(c.max().unwrap_or(0) + mu)
        .max(0);
    hi as u64 + 1
}

/// `(x * y)[c] mod p` for all `c` in `C`, by the derivative pipeline over
/// `F_p^{p-1}`. Requires `C - B ⊆ T`, `supp(x) ⊆ A`, `supp(y) ⊆ B`, and
/// `p` exceeding both 7 and `log2` of the (shifted) universe.
pub fn partial_conv_mod_p(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    p: crate::field::Prime,
    cfg: &Config,
) -> Result<BTreeMap<i64, u64>> {
    check_supports(a, b, x, y)?;
    let universe = shifted_universe(b, c, t);
    if (p.get() as u64) <= ceil_log2(universe) as u64 {
        return Err(Error::Precondition(format!(
            "prime {} does not exceed log2 of the universe {universe}",
            p.get()
        )));
    }
    let cert = find_large_order(p, universe as u128)?;
    let plan = PartialConvPlan::new(a, b, c, t, cert, cfg)?;
    plan.run(x, y)
}

fn check_supports(
    a: &SupportSet,
    b: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
) -> Result<()> {
    if !x.supported_on(a) {
        return Err(Error::Precondition("supp(x) not contained in A".into()));
    }
    if !y.supported_on(b) {
        return Err(Error::Precondition("supp(y) not contained in B".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact integer reconstruction
// ---------------------------------------------------------------------------

fn crt_signed(residues: &[(u64, u64)]) -> i64 {
    // Garner-style mixed radix into u128, then symmetric centering.
    let mut modulus: u128 = 1;
    let mut value: u128 = 0;
    for &(r, p) in residues {
        let p128 = p as u128;
        // value' == value (mod modulus), == r (mod p)
        let inv = mod_inv_u128(modulus % p128, p128);
        let cur = value % p128;
        let diff = (r as u128 + p128 - cur % p128) % p128;
        let k = diff * inv % p128;
        value += modulus * k;
        modulus *= p128;
    }
    if value > modulus / 2 {
        -((modulus - value) as i64)
    } else {
        value as i64
    }
}

fn mod_inv_u128(a: u128, m: u128) -> u128 {
    let (mut t, mut new_t): (i128, i128) = (0, 1);
    let (mut r, mut new_r): (i128, i128) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert_eq!(r, 1, "moduli must be coprime");
    t.rem_euclid(m as i128) as u128
}

/// Prime moduli per the configured backend: enough primes above the floor
/// so their product exceeds `2 * v_max`.
fn residue_moduli(universe: u64, v_max: u128, cfg: &Config) -> Result<Vec<Arc<LargeOrderCert>>> {
    match &cfg.backend {
        Backend::Deterministic => {
            let floor = (ceil_log2(universe) as u64).max(6);
            let mut certs = Vec::new();
            let mut product: u128 = 1;
            let mut have = 0usize;
            while product <= 2 * v_max {
                let primes = sieve_primes_above(floor, have + 4);
                for p in &primes[have..] {
                    product = product.saturating_mul(p.get() as u128);
                    certs.push(find_large_order(*p, universe as u128)?);
                    have += 1;
                    if product > 2 * v_max {
                        break;
                    }
                }
            }
            Ok(certs)
        }
        Backend::PrimeOracle(cert) => {
            let p = cert.field.characteristic() as u128;
            if p <= 2 * v_max {
                return Err(Error::Precondition(format!(
                    "prime-oracle modulus {p} does not exceed twice the output bound {v_max}"
                )));
            }
            if cert.order_lower_bound < universe as u128 {
                return Err(Error::OrderTooWeak {
                    have: cert.order_lower_bound,
                    need: universe as u128,
                });
            }
            Ok(vec![cert.clone()])
        }
    }
}

fn run_over_moduli<F>(certs: &[Arc<LargeOrderCert>], threads: usize, f: F) -> Result<Vec<BTreeMap<i64, u64>>>
where
    F: Fn(&Arc<LargeOrderCert>) -> Result<BTreeMap<i64, u64>> + Sync,
{
    if threads > 1 && certs.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.min(certs.len()))
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            certs.par_iter().map(&f).collect::<Result<Vec<_>>>()
        })
    } else {
        certs.iter().map(&f).collect()
    }
}

/// Exact `(x * y)[c]` for all `c` in `C`, given a superset `T ⊇ C - B`:
/// per-prime residues through the derivative pipeline, then symmetric CRT.
pub fn partial_conv_with_superset(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    cfg: &Config,
) -> Result<PartialConvResult> {
    let (res, _) = partial_conv_with_superset_info(a, b, c, t, x, y, cfg)?;
    Ok(res)
}

pub fn partial_conv_with_superset_info(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    cfg: &Config,
) -> Result<(PartialConvResult, ConvInfo)> {
    check_supports(a, b, x, y)?;
    let mut info = ConvInfo::default();
    if c.is_empty() {
        return Ok((PartialConvResult::default(), info));
    }
    if x.is_empty() || y.is_empty() {
        let values = c.indices().iter().map(|&i| (i, 0)).collect();
        return Ok((PartialConvResult { values }, info));
    }
    let delta = x.delta().max(y.delta()) as u128;
    let v_max = delta * delta * a.len().min(b.len()) as u128;
    let universe = shifted_universe(b, c, t);
    let certs = residue_moduli(universe, v_max, cfg)?;
    let product: u128 = certs
        .iter()
        .map(|ct| ct.field.characteristic() as u128)
        .fold(1u128, |acc, p| acc.saturating_mul(p));
    assert!(product > 2 * v_max, "CRT moduli do not cover the output range");
    info.primes = certs.iter().map(|ct| ct.field.characteristic()).collect();

    let gates = std::sync::Mutex::new(vec![0usize; certs.len()]);
    let per_prime = run_over_moduli(&certs, cfg.threads, |cert| {
        let plan = PartialConvPlan::new(a, b, c, t, cert.clone(), cfg)?;
        let idx = certs
            .iter()
            .position(|ct| Arc::ptr_eq(ct, cert))
            .expect("cert from list");
        gates.lock().unwrap()[idx] = plan.gates;
        plan.run(x, y)
    })?;
    info.circuit_gates = gates.into_inner().unwrap();
    info.point_count = t.union(&b.negate().shift(0)).len();

    let mut values = BTreeMap::new();
    for &ci in c.indices() {
        let residues: Vec<(u64, u64)> = per_prime
            .iter()
            .zip(&certs)
            .map(|(m, cert)| (m[&ci], cert.field.characteristic()))
            .collect();
        values.insert(ci, crt_signed(&residues));
    }
    Ok((PartialConvResult { values }, info))
}

/// Exact partial convolution without a caller superset: `T = C - B` is
/// produced by the output-sensitive sumset recursion.
pub fn partial_conv(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    cfg: &Config,
) -> Result<PartialConvResult> {
    if c.is_empty() {
        return Ok(PartialConvResult::default());
    }
    if x.is_empty() || y.is_empty() {
        let values = c.indices().iter().map(|&i| (i, 0)).collect();
        return Ok(PartialConvResult { values });
    }
    let t = sumset(c, &b.negate(), cfg)?;
    partial_conv_with_superset(a, b, c, &t, x, y, cfg)
}

/// Cyclic partial convolution `(x *_N y)[c]` for `c` in `C`: embeds into
/// the non-cyclic universe `2N`, reconstructs integers at `c` and `c + N`,
/// and sums them.
pub fn cyclic_partial_conv(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    n: i64,
    cfg: &Config,
) -> Result<PartialConvResult> {
    let (res, _) = cyclic_partial_conv_info(a, b, c, t, x, y, n, cfg)?;
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
pub fn cyclic_partial_conv_info(
    a: &SupportSet,
    b: &SupportSet,
    c: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    n: i64,
    cfg: &Config,
) -> Result<(PartialConvResult, ConvInfo)> {
    for s in [a, b, c] {
        if s.min().unwrap_or(0) < 0 || s.max().unwrap_or(0) >= n {
            return Err(Error::Precondition(format!("cyclic indices must lie in [0, {n})")));
        }
    }
    let c_ext = c.union(&c.shift(n));
    let t_ext = t.union(&t.shift(n));
    let (flat, info) = partial_conv_with_superset_info(a, b, &c_ext, &t_ext, x, y, cfg)?;
    let mut values = BTreeMap::new();
    for &ci in c.indices() {
        values.insert(ci, flat.get(ci) + flat.get(ci + n));
    }
    Ok((PartialConvResult { values }, info))
}

// ---------------------------------------------------------------------------
// Output-sensitive deterministic sumsets
// ---------------------------------------------------------------------------

/// Exact convolution values on a superset `t ⊇ supp(x) + supp(y)`, read
/// directly from the bilinear circuit (no derivative stage), with CRT.
fn conv_values_on_sum_superset(
    a: &SupportSet,
    b: &SupportSet,
    t: &SupportSet,
    x: &SparseVector,
    y: &SparseVector,
    cfg: &Config,
) -> Result<BTreeMap<i64, i64>> {
    if a.is_empty() || b.is_empty() {
        return Ok(BTreeMap::new());
    }
    if cfg.debug_verify_superset {
        verify_sum_containment(a, b, t)?;
    }
    let delta = x.delta().max(y.delta()) as u128;
    let v_max = delta * delta * a.len().min(b.len()) as u128;
    let universe = (t.max().unwrap_or(0).max(a.max().unwrap_or(0)).max(b.max().unwrap_or(0)))
        as u64
        + 1;
    let certs = residue_moduli(universe, v_max, cfg)?;
    let per_prime = run_over_moduli(&certs, cfg.threads, |cert| {
        let circuit = build_sparse_conv_circuit(a, b, t, cert, cfg)?;
        let ctx = &cert.field;
        let p = ctx.characteristic();
        let mut values = Vec::with_capacity(circuit.inputs().len());
        for &(label, _) in circuit.inputs() {
            let v = match label.ns {
                Ns::X => x.get(label.index),
                Ns::Y => y.get(label.index),
                _ => unreachable!(),
            };
            values.push(ctx.from_i64(v % p as i64));
        }
        let outs = circuit.eval_values(&values)?;
        let mut m = BTreeMap::new();
        for (&(label, _), val) in circuit.outputs().iter().zip(outs.iter()) {
            debug_assert!(val[1..].iter().all(|&cc| cc == 0));
            m.insert(label.index, val[0]);
        }
        Ok(m)
    })?;
    let mut out = BTreeMap::new();
    for &ci in t.indices() {
        let residues: Vec<(u64, u64)> = per_prime
            .iter()
            .zip(&certs)
            .map(|(m, cert)| (m[&ci], cert.field.characteristic()))
            .collect();
        out.insert(ci, crt_signed(&residues));
    }
    Ok(out)
}

/// Deterministic, output-sensitive sumset `A + B`.
pub fn sumset(a: &SupportSet, b: &SupportSet, cfg: &Config) -> Result<SupportSet> {
    Ok(sumset_with_multiplicities(a, b, cfg)?.0)
}

/// Sumset together with pair counts per sum, by the scaling recursion:
/// the support is computed modulo half the universe recursively, lifted to
/// a candidate superset of size twice the output, and exact counts on the
/// candidates come from one convolution over the superset.
pub fn sumset_with_multiplicities(
    a: &SupportSet,
    b: &SupportSet,
    cfg: &Config,
) -> Result<(SupportSet, Vec<i64>)> {
    if a.is_empty() || b.is_empty() {
        return Ok((SupportSet::default(), Vec::new()));
    }
    let off = a.min().unwrap() + b.min().unwrap();
    let a0 = a.shift(-a.min().unwrap());
    let b0 = b.shift(-b.min().unwrap());
    let span = a0.max().unwrap() + b0.max().unwrap() + 1;
    let n = (span as u64).next_power_of_two() as i64;
    let counts = sumset_rec(&a0, &b0, n, cfg)?;
    let mut support = Vec::with_capacity(counts.len());
    let mut mults = Vec::with_capacity(counts.len());
    for (idx, cnt) in counts {
        debug_assert!(cnt > 0);
        support.push(idx + off);
        mults.push(cnt);
    }
    Ok((SupportSet::new(support), mults))
}

fn sumset_dense_mod(a: &SupportSet, b: &SupportSet, n: i64) -> Vec<(i64, i64)> {
    let mut counts: BTreeMap<i64, i64> = BTreeMap::new();
    for &ai in a.indices() {
        for &bi in b.indices() {
            *counts.entry((ai + bi) % n).or_insert(0) += 1;
        }
    }
    counts.into_iter().collect()
}

/// Counts of `(a, b)` pairs for every sum in `(A + B) mod n`, positive
/// entries only, ascending by index.
///
/// A level falls back to direct pair enumeration when the pair count is
/// within a constant factor of the circuit size the level would need, so
/// the total work stays output-sensitive while small levels skip the
/// field machinery.
fn sumset_rec(a: &SupportSet, b: &SupportSet, n: i64, cfg: &Config) -> Result<Vec<(i64, i64)>> {
    let pairs = a.len().saturating_mul(b.len());
    if n <= SUMSET_DENSE_CUTOFF || pairs <= 4096 {
        return Ok(sumset_dense_mod(a, b, n));
    }
    let half = n / 2;
    let a_half = a.mod_reduce(half);
    let b_half = b.mod_reduce(half);
    let s_half = sumset_rec(&a_half, &b_half, half, cfg)?;
    let level_size = 2 * s_half.len() + a.len() + b.len();
    if pairs <= 16 * level_size {
        return Ok(sumset_dense_mod(a, b, n));
    }
    let cand = SupportSet::new(
        s_half
            .iter()
            .flat_map(|&(i, _)| [i, i + half])
            .collect(),
    );
    // integer sums live in [0, 2n); fold candidate positions accordingly
    let t_int = cand.union(&cand.shift(n));
    let xv = SparseVector::indicator(a);
    let yv = SparseVector::indicator(b);
    let flat = conv_values_on_sum_superset(a, b, &t_int, &xv, &yv, cfg)?;
    let mut out = Vec::new();
    for &i in cand.indices() {
        let total = flat.get(&i).copied().unwrap_or(0) + flat.get(&(i + n)).copied().unwrap_or(0);
        if total > 0 {
            out.push((i, total));
        }
    }
    Ok(out)
}
