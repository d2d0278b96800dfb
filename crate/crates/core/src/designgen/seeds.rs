use super::ir::{IrBuilder, IrDesign, NodeId};
use super::tower::{self, BitMatrix};
use super::DesignError;

pub const SEED_NAMES: [&str; 4] = ["sbox_towerfield", "crc8", "alu4", "parity_tree"];

pub fn build_seed(name: &str) -> Result<IrDesign, DesignError> {
    let design = match name {
        "sbox_towerfield" => sbox_towerfield(),
        "crc8" => crc8(),
        "alu4" => alu4(),
        "parity_tree" => parity_tree(),
        other => return Err(DesignError::UnknownSeed(other.to_string())),
    };
    debug_assert!(design.validate().is_ok());
    Ok(design)
}

/// Bits are least significant first.
type Gf4 = [NodeId; 2];
type Gf16 = [NodeId; 4];

fn linear(b: &mut IrBuilder, columns: &[u8], x: &[NodeId], out_bits: usize) -> Vec<NodeId> {
    (0..out_bits)
        .map(|row| {
            let terms: Vec<NodeId> = (0..columns.len())
                .filter(|&j| (columns[j] >> row) & 1 == 1)
                .map(|j| x[j])
                .collect();
            b.xor_n(&terms)
        })
        .collect()
}

fn gf4_mul(b: &mut IrBuilder, x: Gf4, y: Gf4) -> Gf4 {
    let hh = b.and(x[1], y[1]);
    let ll = b.and(x[0], y[0]);
    let xs = b.xor(x[1], x[0]);
    let ys = b.xor(y[1], y[0]);
    let cross = b.and(xs, ys);
    [b.xor(ll, hh), b.xor(cross, ll)]
}

fn split(x: Gf16) -> (Gf4, Gf4) {
    ([x[2], x[3]], [x[0], x[1]])
}

fn join(h: Gf4, l: Gf4) -> Gf16 {
    [l[0], l[1], h[0], h[1]]
}

fn gf4_xor(b: &mut IrBuilder, x: Gf4, y: Gf4) -> Gf4 {
    [b.xor(x[0], y[0]), b.xor(x[1], y[1])]
}

fn gf16_xor(b: &mut IrBuilder, x: Gf16, y: Gf16) -> Gf16 {
    [b.xor(x[0], y[0]), b.xor(x[1], y[1]), b.xor(x[2], y[2]), b.xor(x[3], y[3])]
}

fn gf16_mul(b: &mut IrBuilder, region: &str, x: Gf16, y: Gf16) -> Gf16 {
    b.region(region);
    let (xh, xl) = split(x);
    let (yh, yl) = split(y);
    let p = gf4_mul(b, xh, yh);
    let q = gf4_mul(b, xl, yl);
    let xs = gf4_xor(b, xh, xl);
    let ys = gf4_xor(b, yh, yl);
    let r = gf4_mul(b, xs, ys);
    let hi = gf4_xor(b, r, q);
    let np = linear(b, &tower::const_mul_matrix(tower::N, 2), &p, 2);
    let lo = gf4_xor(b, [np[0], np[1]], q);
    join(hi, lo)
}

fn gf16_inv(b: &mut IrBuilder, prefix: &str, x: Gf16) -> Gf16 {
    b.region(&format!("{prefix}.det"));
    let (xh, xl) = split(x);
    // N·h^2 + l^2 is linear in (h, l)
    let sq = |v: u8| tower::gf4_mul(v, v);
    let cols: Vec<u8> = (0..4)
        .map(|j| {
            let v = 1u8 << j;
            if j >= 2 {
                tower::gf4_mul(tower::N, sq(v >> 2))
            } else {
                sq(v)
            }
        })
        .collect();
    let f = linear(b, &cols, &x, 2);
    let hl = gf4_mul(b, xh, xl);
    let d = gf4_xor(b, [f[0], f[1]], hl);
    // inversion in GF(4) is squaring: (d1, d0) -> (d1, d1 ^ d0)
    let e: Gf4 = [b.xor(d[1], d[0]), d[1]];
    b.region(&format!("{prefix}.out"));
    let s = gf4_xor(b, xh, xl);
    let oh = gf4_mul(b, xh, e);
    let ol = gf4_mul(b, s, e);
    join(oh, ol)
}

fn sbox_towerfield() -> IrDesign {
    let mut b = IrBuilder::new("sbox_towerfield", 8);
    b.region("in_map");
    let x = b.inputs();
    let to_tower = tower::aes_to_tower();
    let t = linear(&mut b, &to_tower.columns, &x, 8);
    let a_h: Gf16 = [t[4], t[5], t[6], t[7]];
    let a_l: Gf16 = [t[0], t[1], t[2], t[3]];

    b.region("inv.sq_scale");
    let mut cols = [0u8; 8];
    let sqs = tower::sq_scale_matrix();
    for j in 0..4 {
        cols[j] = tower::gf16_mul(1 << j, 1 << j);
        cols[j + 4] = sqs[j];
    }
    let lin: Vec<NodeId> = a_l.iter().chain(a_h.iter()).copied().collect();
    let f = linear(&mut b, &cols, &lin, 4);
    let hl = gf16_mul(&mut b, "inv.mul_hl", a_h, a_l);
    b.region("inv.det");
    let d = gf16_xor(&mut b, [f[0], f[1], f[2], f[3]], hl);
    let e = gf16_inv(&mut b, "inv.gf16_inv", d);
    b.region("inv.sum");
    let s = gf16_xor(&mut b, a_h, a_l);
    let o_h = gf16_mul(&mut b, "inv.mul_h", a_h, e);
    let o_l = gf16_mul(&mut b, "inv.mul_l", s, e);

    b.region("out_map");
    let inv: Vec<NodeId> = o_l.iter().chain(o_h.iter()).copied().collect();
    let out_map: BitMatrix = tower::aes_affine().compose(&to_tower.inverse());
    let y = linear(&mut b, &out_map.columns, &inv, 8);
    let outs = y
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if (tower::AES_AFFINE_CONSTANT >> i) & 1 == 1 {
                b.not(n)
            } else {
                n
            }
        })
        .collect();
    b.finish(outs)
}

/// CRC-8 (polynomial 0x07, zero initial value, no reflection) of a 16-bit
/// message, most significant bit first.
fn crc8() -> IrDesign {
    let mut b = IrBuilder::new("crc8", 16);
    let x = b.inputs();
    let zero = b.konst(false);
    let mut crc = [zero; 8];
    for byte in 0..2 {
        b.region(&format!("byte{byte}"));
        for i in 0..8 {
            let bit = x[15 - (byte * 8 + i)];
            let fb = b.xor(crc[7], bit);
            let mut next = [zero; 8];
            next[0] = fb;
            for k in 1..8 {
                next[k] = if (0x07 >> k) & 1 == 1 { b.xor(crc[k - 1], fb) } else { crc[k - 1] };
            }
            crc = next;
        }
    }
    b.finish(crc.to_vec())
}

/// 4-bit ALU: `a = x[0..4]`, `b = x[4..8]`, `op = x[8..10]`.
/// op 0: a + b with carry out; 1: a - b with borrow out; 2: a & b; 3: a ^ b.
fn alu4() -> IrDesign {
    let mut b = IrBuilder::new("alu4", 10);
    let x = b.inputs();
    let (op0, op1) = (x[8], x[9]);
    b.region("adder");
    let nop1 = b.not(op1);
    let sub = b.and(op0, nop1);
    let mut carry = sub;
    let mut sum = Vec::new();
    for i in 0..4 {
        let bi = b.xor(x[4 + i], sub);
        let p = b.xor(x[i], bi);
        sum.push(b.xor(p, carry));
        let g = b.and(x[i], bi);
        let t = b.and(p, carry);
        carry = b.or(g, t);
    }
    let top = b.xor(carry, sub);
    b.region("logic");
    let mut logic = Vec::new();
    for i in 0..4 {
        let and = b.and(x[i], x[4 + i]);
        let xor = b.xor(x[i], x[4 + i]);
        logic.push(b.mux(op0, and, xor));
    }
    b.region("select");
    let mut outs: Vec<NodeId> = (0..4).map(|i| b.mux(op1, sum[i], logic[i])).collect();
    let zero = b.konst(false);
    outs.push(b.mux(op1, top, zero));
    b.finish(outs)
}

fn parity_tree() -> IrDesign {
    let mut b = IrBuilder::new("parity_tree", 8);
    let x = b.inputs();
    b.region("tree");
    let p = b.xor_n(&x);
    b.finish(vec![p])
}
