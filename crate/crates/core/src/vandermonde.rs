//! Linear circuits for transposed-Vandermonde products `Vx` and `V^{-1}x`
//! over pairwise-distinct evaluation points.
//!
//! The forward constructions are subproduct-tree multipoint evaluation and
//! interpolation with all node polynomials embedded as circuit constants;
//! polynomial-by-constant products use Karatsuba-structured gate patterns.
//! `Vx` and `V^{-1}x` are obtained from them with [`transpose_linear`].
//!
//! Both builders accept a liveness mask so callers wiring rectangular slices
//! (inputs on a few slots, or outputs read at a few slots) get circuits
//! pruned to the touched branches.

use crate::circuit::{Circuit, CircuitBuilder, GateRef, Label, transpose_linear};
use crate::error::{Error, Result};
use crate::field::{Elem, FieldCtx};
use std::collections::HashSet;
use std::sync::Arc;

/// Leaf block size of the subproduct tree.
const LEAF: usize = 4;
/// Below this size polynomial products fall back to schoolbook.
const KARATSUBA_MIN: usize = 8;

/// Evaluation points for a transposed Vandermonde matrix `V[i][j] = a_j^i`.
#[derive(Clone, Debug)]
pub struct VandermondeSpec {
    pub field: Arc<FieldCtx>,
    pub points: Vec<Elem>,
}

impl VandermondeSpec {
    pub fn new(field: Arc<FieldCtx>, points: Vec<Elem>) -> Result<VandermondeSpec> {
        if points.is_empty() {
            return Err(Error::Precondition("need at least one evaluation point".into()));
        }
        let mut seen: HashSet<&[u64]> = HashSet::with_capacity(points.len());
        for p in &points {
            if !seen.insert(p.as_slice()) {
                return Err(Error::Precondition("evaluation points must be pairwise distinct".into()));
            }
        }
        Ok(VandermondeSpec { field, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Numeric polynomial arithmetic over a field context
// ---------------------------------------------------------------------------

type NPoly = Vec<Elem>;

fn np_zero(ctx: &FieldCtx, len: usize) -> NPoly {
    vec![ctx.zero(); len]
}

fn np_mul(ctx: &FieldCtx, a: &[Elem], b: &[Elem]) -> NPoly {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.len() < KARATSUBA_MIN {
        return np_mul_school(ctx, short, long);
    }
    if long.len() >= 2 * short.len() {
        // chunk the long side
        let mut out = np_zero(ctx, a.len() + b.len() - 1);
        for (ci, chunk) in long.chunks(short.len()).enumerate() {
            let part = np_mul(ctx, short, chunk);
            let off = ci * short.len();
            for (i, v) in part.into_iter().enumerate() {
                out[off + i] = ctx.add(&out[off + i], &v);
            }
        }
        return out;
    }
    // balanced Karatsuba
    let h = long.len().div_ceil(2);
    let (a0, a1) = short.split_at(h.min(short.len()));
    let (b0, b1) = long.split_at(h);
    let z0 = np_mul(ctx, a0, b0);
    let z2 = if a1.is_empty() { vec![] } else { np_mul(ctx, a1, b1) };
    let s0 = np_add_padded(ctx, a0, a1);
    let s1 = np_add_padded(ctx, b0, b1);
    let z1 = np_mul(ctx, &s0, &s1);
    let out_len = short.len() + long.len() - 1;
    let mut out = np_zero(ctx, out_len);
    for (i, v) in z0.iter().enumerate() {
        out[i] = ctx.add(&out[i], v);
    }
    for (i, v) in z1.iter().enumerate() {
        let mut t = v.clone();
        if let Some(x) = z0.get(i) {
            t = ctx.sub(&t, x);
        }
        if let Some(x) = z2.get(i) {
            t = ctx.sub(&t, x);
        }
        // positions past the true degree carry cancelled (zero) values
        if h + i < out_len {
            out[h + i] = ctx.add(&out[h + i], &t);
        } else {
            debug_assert!(ctx.is_zero(&t));
        }
    }
    for (i, v) in z2.iter().enumerate() {
        out[2 * h + i] = ctx.add(&out[2 * h + i], v);
    }
    out
}

fn np_mul_school(ctx: &FieldCtx, a: &[Elem], b: &[Elem]) -> NPoly {
    let d = ctx.degree();
    let mut out = np_zero(ctx, a.len() + b.len() - 1);
    let mut scratch = vec![0u64; 2 * d];
    let mut tmp = vec![0u64; d];
    for (i, ai) in a.iter().enumerate() {
        if ctx.is_zero(ai) {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            ctx.mul_slice(&mut tmp, ai, bj, &mut scratch);
            let t = ctx.add(&out[i + j], &tmp);
            out[i + j] = t;
        }
    }
    out
}

fn np_add_padded(ctx: &FieldCtx, a: &[Elem], b: &[Elem]) -> NPoly {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => ctx.add(x, y),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => ctx.zero(),
        })
        .collect()
}

/// Series inverse of `f` (with invertible constant term) modulo `X^k`.
fn np_inv_series(ctx: &FieldCtx, f: &[Elem], k: usize) -> Result<NPoly> {
    let mut g = vec![ctx.inv(&f[0])?];
    while g.len() < k {
        let m = (2 * g.len()).min(k);
        // g <- g * (2 - f * g) mod X^m
        let fg = np_mul(ctx, &f[..f.len().min(m)], &g);
        let mut two_minus = np_zero(ctx, m);
        let two = ctx.add(&ctx.one(), &ctx.one());
        two_minus[0] = two;
        for i in 0..m {
            if let Some(v) = fg.get(i) {
                two_minus[i] = ctx.sub(&two_minus[i], v);
            }
        }
        let mut next = np_mul(ctx, &g, &two_minus);
        next.truncate(m);
        g = next;
    }
    g.truncate(k);
    Ok(g)
}

/// Remainder of `f` (numeric) modulo the monic `m`, via the precomputed
/// series inverse of the reversed modulus.
fn np_rem(ctx: &FieldCtx, f: &[Elem], m: &[Elem], inv_rev: &[Elem]) -> NPoly {
    let deg = m.len() - 1;
    if f.len() <= deg {
        let mut out = f.to_vec();
        out.resize(deg, ctx.zero());
        return out;
    }
    let q_len = f.len() - deg;
    debug_assert!(inv_rev.len() >= q_len);
    let rev_f: Vec<Elem> = f.iter().rev().cloned().collect();
    let mut q_rev = np_mul(ctx, &rev_f[..q_len.min(rev_f.len())], &inv_rev[..q_len]);
    q_rev.truncate(q_len);
    let q: Vec<Elem> = q_rev.into_iter().rev().collect();
    let mq = np_mul(ctx, m, &q);
    (0..deg).map(|i| ctx.sub(&f[i], &mq[i])).collect()
}

fn np_deriv(ctx: &FieldCtx, f: &[Elem]) -> NPoly {
    (1..f.len())
        .map(|i| {
            let k = ctx.from_residue((i as u64) % ctx.characteristic());
            ctx.mul(&f[i], &k)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Subproduct tree
// ---------------------------------------------------------------------------

struct Node {
    lo: usize,
    hi: usize,
    /// Monic product of `(X - a_j)` over the range; length `hi - lo + 1`.
    m: NPoly,
    /// Series inverse of `rev(m)`, sized for quotients arising from the
    /// parent (length = parent deg - own deg). Absent at the root.
    inv_rev: Option<NPoly>,
    children: Option<(Box<Node>, Box<Node>)>,
}

pub(crate) struct SubTree {
    field: Arc<FieldCtx>,
    points: Vec<Elem>,
    root: Node,
    /// Series inverse of the reversed master polynomial, mod X^n.
    root_inv_rev: NPoly,
}

impl SubTree {
    fn build_node(ctx: &FieldCtx, points: &[Elem], lo: usize, hi: usize) -> Node {
        let n = hi - lo;
        if n <= LEAF {
            let mut m = vec![ctx.one()];
            for a in &points[lo..hi] {
                // m *= (X - a)
                let mut next = np_zero(ctx, m.len() + 1);
                let neg_a = ctx.neg(a);
                for (i, c) in m.iter().enumerate() {
                    next[i] = ctx.add(&next[i], &ctx.mul(c, &neg_a));
                    next[i + 1] = ctx.add(&next[i + 1], c);
                }
                m = next;
            }
            return Node { lo, hi, m, inv_rev: None, children: None };
        }
        let mid = lo + n.div_ceil(2);
        let left = Self::build_node(ctx, points, lo, mid);
        let right = Self::build_node(ctx, points, mid, hi);
        let m = np_mul(ctx, &left.m, &right.m);
        Node {
            lo,
            hi,
            m,
            inv_rev: None,
            children: Some((Box::new(left), Box::new(right))),
        }
    }

    /// Fill `inv_rev` for every non-root node, sized by the parent degree.
    fn fill_inverses(ctx: &FieldCtx, node: &mut Node) -> Result<()> {
        if let Some((l, r)) = node.children.as_mut() {
            let parent_deg = node.m.len() - 1;
            for child in [l, r] {
                let own_deg = child.m.len() - 1;
                let q_len = parent_deg - own_deg;
                let rev: Vec<Elem> = child.m.iter().rev().cloned().collect();
                child.inv_rev = Some(np_inv_series(ctx, &rev, q_len.max(1))?);
                Self::fill_inverses(ctx, child)?;
            }
        }
        Ok(())
    }

    pub fn new(field: Arc<FieldCtx>, points: Vec<Elem>) -> Result<SubTree> {
        let mut root = Self::build_node(&field, &points, 0, points.len());
        Self::fill_inverses(&field, &mut root)?;
        let rev_m = rev_poly(&root.m);
        let root_inv_rev = np_inv_series(&field, &rev_m, points.len())?;
        Ok(SubTree { field, points, root, root_inv_rev })
    }

    /// Numeric multipoint evaluation of `f` at every tree point.
    fn eval_all(&self, f: &[Elem]) -> Vec<Elem> {
        let mut out = vec![self.field.zero(); self.points.len()];
        self.eval_rec(&self.root, f.to_vec(), &mut out);
        out
    }

    fn eval_rec(&self, node: &Node, f: Vec<Elem>, out: &mut Vec<Elem>) {
        let ctx = &*self.field;
        match &node.children {
            None => {
                for j in node.lo..node.hi {
                    // Horner at a_j
                    let a = &self.points[j];
                    let mut acc = ctx.zero();
                    for c in f.iter().rev() {
                        acc = ctx.add(&ctx.mul(&acc, a), c);
                    }
                    out[j] = acc;
                }
            }
            Some((l, r)) => {
                let fl = np_rem(ctx, &f, &l.m, l.inv_rev.as_ref().unwrap());
                let fr = np_rem(ctx, &f, &r.m, r.inv_rev.as_ref().unwrap());
                self.eval_rec(l, fl, out);
                self.eval_rec(r, fr, out);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gate-level polynomial products against constant polynomials
// ---------------------------------------------------------------------------

fn all_zero(b: &CircuitBuilder, v: &[GateRef], zero: GateRef) -> bool {
    v.iter().all(|&r| r == zero)
}

/// Gates for the product of a constant polynomial `c` with a gate-valued
/// polynomial `v`, Karatsuba-structured above the schoolbook threshold.
fn g_mul_const_poly(
    b: &mut CircuitBuilder,
    ctx: &FieldCtx,
    c: &[Elem],
    v: &[GateRef],
) -> Vec<GateRef> {
    if c.is_empty() || v.is_empty() {
        return vec![];
    }
    let zero = b.zero();
    let out_len = c.len() + v.len() - 1;
    if all_zero(b, v, zero) {
        return vec![zero; out_len];
    }
    if c.len().min(v.len()) < KARATSUBA_MIN {
        let mut out = vec![zero; out_len];
        for (i, ci) in c.iter().enumerate() {
            if ctx.is_zero(ci) {
                continue;
            }
            for (j, &vj) in v.iter().enumerate() {
                let prod = b.mul_const(ci.clone(), vj);
                out[i + j] = b.add(out[i + j], prod);
            }
        }
        return out;
    }
    if c.len() >= 2 * v.len() || v.len() >= 2 * c.len() {
        // chunk the longer side
        let mut out = vec![zero; out_len];
        if c.len() >= v.len() {
            for (ci, chunk) in c.chunks(v.len()).enumerate() {
                let part = g_mul_const_poly(b, ctx, chunk, v);
                let off = ci * v.len();
                for (i, r) in part.into_iter().enumerate() {
                    out[off + i] = b.add(out[off + i], r);
                }
            }
        } else {
            for (ci, chunk) in v.chunks(c.len()).enumerate() {
                let part = g_mul_const_poly(b, ctx, c, chunk);
                let off = ci * c.len();
                for (i, r) in part.into_iter().enumerate() {
                    out[off + i] = b.add(out[off + i], r);
                }
            }
        }
        return out;
    }
    let h = c.len().max(v.len()).div_ceil(2);
    let (c0, c1) = c.split_at(h.min(c.len()));
    let (v0, v1) = v.split_at(h.min(v.len()));
    let z0 = g_mul_const_poly(b, ctx, c0, v0);
    let z2 = if c1.is_empty() || v1.is_empty() {
        vec![]
    } else {
        g_mul_const_poly(b, ctx, c1, v1)
    };
    let cs = np_add_padded(ctx, c0, c1);
    let vs: Vec<GateRef> = (0..v0.len().max(v1.len()))
        .map(|i| match (v0.get(i), v1.get(i)) {
            (Some(&x), Some(&y)) => b.add(x, y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => zero,
        })
        .collect();
    let z1 = g_mul_const_poly(b, ctx, &cs, &vs);
    let mut out = vec![zero; out_len];
    for (i, &r) in z0.iter().enumerate() {
        out[i] = b.add(out[i], r);
    }
    for (i, &r) in z1.iter().enumerate() {
        // positions past the true degree carry cancelled (zero) values
        if h + i >= out_len {
            continue;
        }
        let mut t = r;
        if let Some(&x) = z0.get(i) {
            t = b.sub(t, x);
        }
        if let Some(&x) = z2.get(i) {
            t = b.sub(t, x);
        }
        out[h + i] = b.add(out[h + i], t);
    }
    for (i, &r) in z2.iter().enumerate() {
        out[2 * h + i] = b.add(out[2 * h + i], r);
    }
    out
}

/// Reversed node polynomial `rev(m) = prod (1 - a_k X)`.
fn rev_poly(m: &[Elem]) -> Vec<Elem> {
    m.iter().rev().cloned().collect()
}

/// Up-tree for the power-sum numerator `N_v = sum_{j in v} x_j *
/// prod_{k in v, k != j} (1 - a_k X)`; `None` when all inputs below are
/// structurally absent.
fn g_powersum_node(
    b: &mut CircuitBuilder,
    tree: &SubTree,
    node: &Node,
    xs: &[Option<GateRef>],
) -> Option<Vec<GateRef>> {
    let ctx = &*tree.field;
    match &node.children {
        None => {
            let mut acc: Option<Vec<GateRef>> = None;
            for j in node.lo..node.hi {
                let Some(xref) = xs[j] else { continue };
                // prod over the other leaf points of (1 - a_k X), numeric
                let mut q = vec![ctx.one()];
                for k in node.lo..node.hi {
                    if k == j {
                        continue;
                    }
                    let mut next = np_zero(ctx, q.len() + 1);
                    let neg_a = ctx.neg(&tree.points[k]);
                    for (i, c) in q.iter().enumerate() {
                        next[i] = ctx.add(&next[i], c);
                        next[i + 1] = ctx.add(&next[i + 1], &ctx.mul(c, &neg_a));
                    }
                    q = next;
                }
                q.resize(node.hi - node.lo, ctx.zero());
                let term: Vec<GateRef> =
                    q.iter().map(|qc| b.mul_const(qc.clone(), xref)).collect();
                acc = Some(match acc {
                    None => term,
                    Some(prev) => prev
                        .into_iter()
                        .zip(term)
                        .map(|(x, y)| b.add(x, y))
                        .collect(),
                });
            }
            acc
        }
        Some((l, r)) => {
            let nl = g_powersum_node(b, tree, l, xs);
            let nr = g_powersum_node(b, tree, r, xs);
            match (nl, nr) {
                (None, None) => None,
                (Some(nl), None) => Some(g_mul_const_poly(b, ctx, &rev_poly(&r.m), &nl)),
                (None, Some(nr)) => Some(g_mul_const_poly(b, ctx, &rev_poly(&l.m), &nr)),
                (Some(nl), Some(nr)) => {
                    let a = g_mul_const_poly(b, ctx, &rev_poly(&r.m), &nl);
                    let c = g_mul_const_poly(b, ctx, &rev_poly(&l.m), &nr);
                    Some(a.into_iter().zip(c).map(|(x, y)| b.add(x, y)).collect())
                }
            }
        }
    }
}

fn g_interp_node(
    b: &mut CircuitBuilder,
    tree: &SubTree,
    node: &Node,
    scaled: &[Option<GateRef>],
) -> Option<Vec<GateRef>> {
    let ctx = &*tree.field;
    match &node.children {
        None => {
            let mut acc: Option<Vec<GateRef>> = None;
            for j in node.lo..node.hi {
                let Some(vref) = scaled[j] else { continue };
                // numeric quotient m_leaf / (X - a_j) by synthetic division
                let deg = node.m.len() - 1;
                let mut q = vec![ctx.zero(); deg];
                let mut carry = ctx.zero();
                for i in (0..deg).rev() {
                    let c = ctx.add(&node.m[i + 1], &ctx.mul(&carry, &tree.points[j]));
                    q[i] = c.clone();
                    carry = c;
                }
                let term: Vec<GateRef> = q
                    .iter()
                    .map(|qc| b.mul_const(qc.clone(), vref))
                    .collect();
                acc = Some(match acc {
                    None => term,
                    Some(prev) => prev
                        .into_iter()
                        .zip(term)
                        .map(|(x, y)| b.add(x, y))
                        .collect(),
                });
            }
            acc
        }
        Some((l, r)) => {
            let fl = g_interp_node(b, tree, l, scaled);
            let fr = g_interp_node(b, tree, r, scaled);
            match (fl, fr) {
                (None, None) => None,
                (Some(fl), None) => Some(g_mul_const_poly(b, ctx, &r.m, &fl)),
                (None, Some(fr)) => Some(g_mul_const_poly(b, ctx, &l.m, &fr)),
                (Some(fl), Some(fr)) => {
                    let a = g_mul_const_poly(b, ctx, &r.m, &fl);
                    let c = g_mul_const_poly(b, ctx, &l.m, &fr);
                    Some(a.into_iter().zip(c).map(|(x, y)| b.add(x, y)).collect())
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Circuit constructions
// ---------------------------------------------------------------------------

/// Shared subproduct-tree data for one point set, from which the forward
/// and transposed circuits are derived.
pub struct VanderPlan {
    tree: SubTree,
}

impl VanderPlan {
    pub fn new(spec: &VandermondeSpec) -> Result<VanderPlan> {
        // distinctness is validated by VandermondeSpec::new
        Ok(VanderPlan { tree: SubTree::new(spec.field.clone(), spec.points.clone())? })
    }

    fn field(&self) -> &Arc<FieldCtx> {
        &self.tree.field
    }

    fn len(&self) -> usize {
        self.tree.points.len()
    }

    /// Append power-sum gates for `out_i = sum_j a_j^i * xs[j]` directly
    /// into `b`; `None` slots are structurally zero. The numerator
    /// `sum_j x_j prod_{k != j} (1 - a_k X)` is assembled bottom-up over
    /// the subproduct tree, then multiplied by the constant series inverse
    /// of the reversed master polynomial.
    pub fn append_power_sums(
        &self,
        b: &mut CircuitBuilder,
        xs: &[Option<GateRef>],
    ) -> Result<Vec<GateRef>> {
        let n = self.len();
        assert_eq!(xs.len(), n);
        let ctx = self.field().clone();
        if xs.iter().all(|x| x.is_none()) {
            let zero = b.zero();
            return Ok(vec![zero; n]);
        }
        let num = g_powersum_node(b, &self.tree, &self.tree.root, xs)
            .expect("at least one live slot");
        let mut full = g_mul_const_poly(b, &ctx, &self.tree.root_inv_rev, &num);
        full.truncate(n);
        Ok(full)
    }

    /// Standalone power-sum circuit over the live input slots.
    fn power_sum_direct(&self, live_in: &[bool]) -> Result<Circuit> {
        let n = self.len();
        assert_eq!(live_in.len(), n);
        if !live_in.iter().any(|&l| l) {
            return Err(Error::Precondition("at least one live slot required".into()));
        }
        let mut b = CircuitBuilder::new(self.field().clone());
        let mut xs: Vec<Option<GateRef>> = vec![None; n];
        for (j, x) in xs.iter_mut().enumerate() {
            if live_in[j] {
                *x = Some(b.input(Label::x(j as i64)));
            }
        }
        let full = self.append_power_sums(&mut b, &xs)?;
        for (i, r) in full.into_iter().enumerate() {
            b.mark_output(Label::v(i as i64), r);
        }
        Ok(b.finish().eliminate_dead())
    }

    /// Multipoint evaluation circuit: inputs `V(i)` are the coefficients of
    /// a polynomial of degree `< n`, outputs `X(j)` its values at the live
    /// points. Obtained by transposing the power-sum construction.
    pub fn eval_circuit(&self, live: &[bool]) -> Result<Circuit> {
        let direct = self.power_sum_direct(live)?;
        Ok(transpose_linear(&direct)?.eliminate_dead())
    }

    /// Interpolation circuit: inputs `X(j)` are values at the live points
    /// (absent points read as zero), outputs `V(i)` the coefficients of the
    /// unique interpolant of degree `< n`.
    pub fn interp_circuit(&self, live: &[bool]) -> Result<Circuit> {
        let n = self.len();
        assert_eq!(live.len(), n);
        let ctx = self.field().clone();
        let mut b = CircuitBuilder::new(ctx.clone());
        // weights 1 / M'(a_j), via numeric multipoint evaluation of M'
        let deriv = np_deriv(&ctx, &self.tree.root.m);
        let deriv_at = self.tree.eval_all(&deriv);
        let mut scaled: Vec<Option<GateRef>> = vec![None; n];
        for j in 0..n {
            if !live[j] {
                continue;
            }
            let inp = b.input(Label::x(j as i64));
            let w = ctx.inv(&deriv_at[j]).expect("distinct points give nonzero M'");
            scaled[j] = Some(b.mul_const(w, inp));
        }
        let coeffs = g_interp_node(&mut b, &self.tree, &self.tree.root, &scaled);
        let zero = b.zero();
        let coeffs = coeffs.unwrap_or_else(|| vec![zero; n]);
        for (i, r) in coeffs.into_iter().enumerate() {
            b.mark_output(Label::v(i as i64), r);
        }
        Ok(b.finish())
    }

    /// Circuit for the power sums `out_i = sum_j a_j^i * x_j` over the live
    /// input slots `j` (the transposed multipoint evaluation).
    pub fn power_sum_circuit(&self, live_in: &[bool]) -> Result<Circuit> {
        self.power_sum_direct(live_in)
    }

    /// Circuit recovering point masses from power sums, restricted to the
    /// live output slots (the transposed interpolation).
    pub fn point_mass_circuit(&self, live_out: &[bool]) -> Result<Circuit> {
        let ic = self.interp_circuit(live_out)?;
        transpose_linear(&ic)
    }
}

/// Linear circuit computing `Vx`: inputs `X(0..n)`, outputs `V(0..n)` with
/// `(Vx)_i = sum_j a_j^i x_j`. Built by constructing the subproduct-tree
/// multipoint evaluation circuit and applying [`transpose_linear`].
pub fn build_vmul_circuit(spec: &VandermondeSpec) -> Result<Circuit> {
    let plan = VanderPlan::new(spec)?;
    let ec = plan.eval_circuit(&vec![true; spec.len()])?;
    Ok(transpose_linear(&ec)?.eliminate_dead())
}

/// Linear circuit computing `V^{-1}x`: inputs `V(0..n)`, outputs `X(0..n)`.
/// Built as the transpose of the interpolation circuit.
pub fn build_vinv_circuit(spec: &VandermondeSpec) -> Result<Circuit> {
    let plan = VanderPlan::new(spec)?;
    plan.point_mass_circuit(&vec![true; spec.len()])
}

/// Quadratic `Vx` circuit: per-point Horner chains with explicit wiring.
/// Cross-validation alternative to the subproduct-tree construction.
pub fn build_vmul_dense_circuit(spec: &VandermondeSpec) -> Result<Circuit> {
    let ctx = spec.field.clone();
    let n = spec.len();
    let mut b = CircuitBuilder::new(ctx.clone());
    let xs: Vec<GateRef> = (0..n).map(|j| b.input(Label::x(j as i64))).collect();
    let zero = b.zero();
    let mut rows = vec![zero; n];
    for (j, x) in xs.iter().enumerate() {
        let mut p = *x;
        for row in rows.iter_mut() {
            *row = b.add(*row, p);
            p = b.mul_const(spec.points[j].clone(), p);
        }
    }
    for (i, r) in rows.into_iter().enumerate() {
        b.mark_output(Label::v(i as i64), r);
    }
    Ok(b.finish())
}

/// Quadratic `V^{-1}x` circuit wired from the numerically inverted matrix.
pub fn build_vinv_dense_circuit(spec: &VandermondeSpec) -> Result<Circuit> {
    let ctx = spec.field.clone();
    let n = spec.len();
    let inv = invert_vandermonde(spec)?;
    let mut b = CircuitBuilder::new(ctx.clone());
    let ys: Vec<GateRef> = (0..n).map(|i| b.input(Label::v(i as i64))).collect();
    for j in 0..n {
        let zero = b.zero();
        let mut acc = zero;
        for i in 0..n {
            let term = b.mul_const(inv[j][i].clone(), ys[i]);
            acc = b.add(acc, term);
        }
        b.mark_output(Label::x(j as i64), acc);
    }
    Ok(b.finish())
}

// ---------------------------------------------------------------------------
// Dense reference computations
// ---------------------------------------------------------------------------

/// O(n^2) reference for `Vx`.
pub fn dense_vmul(spec: &VandermondeSpec, x: &[Elem]) -> Result<Vec<Elem>> {
    let ctx = &*spec.field;
    let n = spec.len();
    if x.len() != n {
        return Err(Error::Precondition(format!(
            "dimension mismatch: {} inputs for {} points",
            x.len(),
            n
        )));
    }
    let mut out = vec![ctx.zero(); n];
    for (j, xj) in x.iter().enumerate() {
        let mut p = xj.clone();
        for o in out.iter_mut() {
            *o = ctx.add(o, &p);
            p = ctx.mul(&p, &spec.points[j]);
        }
    }
    Ok(out)
}

/// O(n^3) reference solving `Vx = y` by Gaussian elimination.
pub fn dense_vsolve(spec: &VandermondeSpec, y: &[Elem]) -> Result<Vec<Elem>> {
    let ctx = &*spec.field;
    let n = spec.len();
    if y.len() != n {
        return Err(Error::Precondition(format!(
            "dimension mismatch: {} values for {} points",
            y.len(),
            n
        )));
    }
    // rows of V: V[i][j] = a_j^i
    let mut aug: Vec<Vec<Elem>> = Vec::with_capacity(n);
    let mut pow = vec![ctx.one(); n];
    for i in 0..n {
        let mut row = pow.clone();
        row.push(y[i].clone());
        aug.push(row);
        if i + 1 < n {
            for (j, p) in pow.iter_mut().enumerate() {
                *p = ctx.mul(p, &spec.points[j]);
            }
        }
    }
    gauss_solve(ctx, aug)
}

fn gauss_solve(ctx: &FieldCtx, mut aug: Vec<Vec<Elem>>) -> Result<Vec<Elem>> {
    let n = aug.len();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !ctx.is_zero(&aug[r][col]))
            .ok_or_else(|| Error::Precondition("singular system".into()))?;
        aug.swap(col, pivot);
        let inv = ctx.inv(&aug[col][col].clone())?;
        for c in col..=n {
            aug[col][c] = ctx.mul(&aug[col][c], &inv);
        }
        for r in 0..n {
            if r != col && !ctx.is_zero(&aug[r][col]) {
                let factor = aug[r][col].clone();
                for c in col..=n {
                    let t = ctx.mul(&factor, &aug[col][c]);
                    aug[r][c] = ctx.sub(&aug[r][c], &t);
                }
            }
        }
    }
    Ok(aug.into_iter().map(|row| row[row.len() - 1].clone()).collect())
}

fn invert_vandermonde(spec: &VandermondeSpec) -> Result<Vec<Vec<Elem>>> {
    let ctx = &*spec.field;
    let n = spec.len();
    // solve V w = e_i for each unit vector; column i of V^{-1}
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![ctx.zero(); n];
        e[i] = ctx.one();
        cols.push(dense_vsolve(spec, &e)?);
    }
    // inv[j][i] = (V^{-1})[j][i] = cols[i][j]
    let mut inv = vec![vec![ctx.zero(); n]; n];
    for (i, col) in cols.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            inv[j][i] = v.clone();
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Assignment;
    use crate::field::{FieldCtx, Prime, find_large_order};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f97() -> Arc<FieldCtx> {
        Arc::new(FieldCtx::prime_field(Prime::new(97).unwrap()))
    }

    fn distinct_points(ctx: &Arc<FieldCtx>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Elem> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        while out.len() < n {
            let e = ctx.rand_elem(rng);
            if seen.insert(e.clone()) {
                out.push(e);
            }
        }
        out
    }

    fn run_circuit(c: &Circuit, label_of: impl Fn(usize) -> Label, x: &[Elem]) -> Vec<Elem> {
        let mut a = Assignment::new();
        for (i, v) in x.iter().enumerate() {
            a.set(label_of(i), v.clone());
        }
        let out = c.eval(&a).unwrap();
        let mut res: Vec<(Label, Elem)> = out.into_iter().collect();
        res.sort_by_key(|(l, _)| *l);
        res.into_iter().map(|(_, v)| v).collect()
    }

    #[test]
    fn single_point_identity() {
        let ctx = f97();
        let spec = VandermondeSpec::new(ctx.clone(), vec![ctx.from_residue(5)]).unwrap();
        let c = build_vmul_circuit(&spec).unwrap();
        assert!(c.validate());
        let out = run_circuit(&c, |i| Label::x(i as i64), &[ctx.from_residue(3)]);
        assert_eq!(out, vec![ctx.from_residue(3)]);
        let ci = build_vinv_circuit(&spec).unwrap();
        let out = run_circuit(&ci, |i| Label::v(i as i64), &[ctx.from_residue(3)]);
        assert_eq!(out, vec![ctx.from_residue(3)]);
    }

    #[test]
    fn two_points_spec_example() {
        // n=2, a=(2,3) over F_7, x=(1,1) -> Vx = (2, 5)
        let ctx = Arc::new(FieldCtx::prime_field(Prime::new(7).unwrap()));
        let spec = VandermondeSpec::new(
            ctx.clone(),
            vec![ctx.from_residue(2), ctx.from_residue(3)],
        )
        .unwrap();
        let c = build_vmul_circuit(&spec).unwrap();
        let out = run_circuit(&c, |i| Label::x(i as i64), &[ctx.one(), ctx.one()]);
        assert_eq!(out, vec![ctx.from_residue(2), ctx.from_residue(5)]);
        // and the dense oracle agrees
        let oracle = dense_vmul(&spec, &[ctx.one(), ctx.one()]).unwrap();
        assert_eq!(oracle, out);
    }

    #[test]
    fn unit_vector_spec_example() {
        // n=3, points (1,2,3) over F_7, x = e_1 -> column of ones
        let ctx = Arc::new(FieldCtx::prime_field(Prime::new(7).unwrap()));
        let spec = VandermondeSpec::new(
            ctx.clone(),
            vec![ctx.from_residue(1), ctx.from_residue(2), ctx.from_residue(3)],
        )
        .unwrap();
        let x = vec![ctx.one(), ctx.zero(), ctx.zero()];
        let out = dense_vmul(&spec, &x).unwrap();
        assert_eq!(out, vec![ctx.one(), ctx.one(), ctx.one()]);
    }

    #[test]
    fn duplicate_points_rejected() {
        let ctx = f97();
        let p = ctx.from_residue(4);
        assert!(VandermondeSpec::new(ctx.clone(), vec![p.clone(), p]).is_err());
    }

    #[test]
    fn matches_dense_oracle_prime_field() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2usize, 3, 5, 8, 13, 24, 40, 64] {
            let pts = distinct_points(&ctx, n, &mut rng);
            let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
            let c = build_vmul_circuit(&spec).unwrap();
            assert!(c.validate());
            let x: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
            let got = run_circuit(&c, |i| Label::x(i as i64), &x);
            let expect = dense_vmul(&spec, &x).unwrap();
            assert_eq!(got, expect, "n={n}");
        }
    }

    #[test]
    fn matches_dense_oracle_extension_field() {
        let cert = find_large_order(Prime::new(7).unwrap(), 100).unwrap();
        let ctx = cert.field.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4usize, 16, 33] {
            // powers of omega are distinct
            let pts: Vec<Elem> = (0..n as u128).map(|i| ctx.pow(&cert.omega, i)).collect();
            let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
            let c = build_vmul_circuit(&spec).unwrap();
            let x: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
            let got = run_circuit(&c, |i| Label::x(i as i64), &x);
            let expect = dense_vmul(&spec, &x).unwrap();
            assert_eq!(got, expect, "n={n}");
        }
    }

    #[test]
    fn vinv_composes_to_identity() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2usize, 7, 19, 40] {
            let pts = distinct_points(&ctx, n, &mut rng);
            let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
            let vm = build_vmul_circuit(&spec).unwrap();
            let vi = build_vinv_circuit(&spec).unwrap();
            for _ in 0..5 {
                let x: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
                let mid = run_circuit(&vm, |i| Label::x(i as i64), &x);
                let back = run_circuit(&vi, |i| Label::v(i as i64), &mid);
                assert_eq!(back, x, "n={n}");
            }
        }
    }

    #[test]
    fn vinv_matches_dense_solve() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 10, 32] {
            let pts = distinct_points(&ctx, n, &mut rng);
            let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
            let vi = build_vinv_circuit(&spec).unwrap();
            let y: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
            let got = run_circuit(&vi, |i| Label::v(i as i64), &y);
            let expect = dense_vsolve(&spec, &y).unwrap();
            assert_eq!(got, expect, "n={n}");
        }
    }

    #[test]
    fn dense_circuits_agree_with_tree_circuits() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20;
        let pts = distinct_points(&ctx, n, &mut rng);
        let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
        let x: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
        let a = run_circuit(&build_vmul_circuit(&spec).unwrap(), |i| Label::x(i as i64), &x);
        let bq = run_circuit(
            &build_vmul_dense_circuit(&spec).unwrap(),
            |i| Label::x(i as i64),
            &x,
        );
        assert_eq!(a, bq);
        let c = run_circuit(&build_vinv_circuit(&spec).unwrap(), |i| Label::v(i as i64), &x);
        let dq = run_circuit(
            &build_vinv_dense_circuit(&spec).unwrap(),
            |i| Label::v(i as i64),
            &x,
        );
        assert_eq!(c, dq);
    }

    #[test]
    fn oracles_cross_check() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 17;
        let pts = distinct_points(&ctx, n, &mut rng);
        let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
        let x: Vec<Elem> = (0..n).map(|_| ctx.rand_elem(&mut rng)).collect();
        let y = dense_vmul(&spec, &x).unwrap();
        let back = dense_vsolve(&spec, &y).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn rectangular_pruning_matches_padded_full() {
        let ctx = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 24;
        let pts = distinct_points(&ctx, n, &mut rng);
        let spec = VandermondeSpec::new(ctx.clone(), pts).unwrap();
        let plan = VanderPlan::new(&spec).unwrap();
        let mut live = vec![false; n];
        for j in [1usize, 5, 6, 17] {
            live[j] = true;
        }
        let rect = plan.power_sum_circuit(&live).unwrap();
        let full = build_vmul_circuit(&spec).unwrap();
        assert!(rect.gate_count() < full.gate_count());
        // rect on live slots == full on zero-padded input
        let mut x_full = vec![ctx.zero(); n];
        let mut a_rect = Assignment::new();
        for j in 0..n {
            if live[j] {
                let v = ctx.rand_elem(&mut rng);
                x_full[j] = v.clone();
                a_rect.set(Label::x(j as i64), v);
            }
        }
        let out_rect = rect.eval(&a_rect).unwrap();
        let out_full = run_circuit(&full, |i| Label::x(i as i64), &x_full);
        for i in 0..n {
            assert_eq!(out_rect[&Label::v(i as i64)], out_full[i]);
        }
    }

    #[test]
    fn circuit_growth_is_subquadratic_smoke() {
        let ctx = f97();
        // F_97 has only 97 elements; use an extension for many points
        let cert = find_large_order(Prime::new(11).unwrap(), 1 << 11).unwrap();
        let ectx = cert.field.clone();
        let mut sizes = Vec::new();
        for n in [32usize, 64, 128] {
            let pts: Vec<Elem> = (0..n as u128).map(|i| ectx.pow(&cert.omega, i)).collect();
            let spec = VandermondeSpec::new(ectx.clone(), pts).unwrap();
            let c = build_vmul_circuit(&spec).unwrap();
            sizes.push(c.gate_count());
        }
        assert!(sizes[1] as f64 / sizes[0] as f64 <= 3.5);
        assert!(sizes[2] as f64 / sizes[1] as f64 <= 3.5);
        drop(ctx);
    }
}
