//! Composite-field arithmetic GF(((2^2)^2)^2) used by the S-box seed.
//!
//! Elements are packed into bytes: a GF(4) element is `g1·w + g0` with
//! `w^2 = w + 1`; a GF(16) element is `h·z + l` over GF(4) with
//! `z^2 = z + N`; a GF(256) element is `H·y + L` over GF(16) with
//! `y^2 = y + LAMBDA`. High halves occupy the upper bits.

/// `w` in GF(4); makes `z^2 + z + N` irreducible.
pub const N: u8 = 0b10;

/// Smallest GF(16) constant making `y^2 + y + LAMBDA` irreducible.
pub fn lambda() -> u8 {
    (1u8..16)
        .find(|&c| (0u8..16).all(|y| gf16_mul(y, y) ^ y != c))
        .expect("an irreducible quadratic exists")
}

pub fn gf4_mul(a: u8, b: u8) -> u8 {
    let (a1, a0) = ((a >> 1) & 1, a & 1);
    let (b1, b0) = ((b >> 1) & 1, b & 1);
    let hi = (a1 & b1) ^ (a1 & b0) ^ (a0 & b1);
    let lo = (a1 & b1) ^ (a0 & b0);
    (hi << 1) | lo
}

pub fn gf16_mul(a: u8, b: u8) -> u8 {
    let (ah, al) = ((a >> 2) & 3, a & 3);
    let (bh, bl) = ((b >> 2) & 3, b & 3);
    let p = gf4_mul(ah, bh);
    let hi = p ^ gf4_mul(ah, bl) ^ gf4_mul(al, bh);
    let lo = gf4_mul(N, p) ^ gf4_mul(al, bl);
    (hi << 2) | lo
}

pub fn gf256_mul(a: u8, b: u8) -> u8 {
    let lam = lambda();
    let (ah, al) = (a >> 4, a & 15);
    let (bh, bl) = (b >> 4, b & 15);
    let p = gf16_mul(ah, bh);
    let hi = p ^ gf16_mul(ah, bl) ^ gf16_mul(al, bh);
    let lo = gf16_mul(lam, p) ^ gf16_mul(al, bl);
    (hi << 4) | lo
}

/// Image of the AES generator `x` (root of `x^8 + x^4 + x^3 + x + 1`) in the
/// tower field; the smallest such root is taken.
pub fn aes_root() -> u8 {
    (2u8..=255)
        .find(|&b| {
            let mut pw = [1u8; 9];
            for i in 1..9 {
                pw[i] = gf256_mul(pw[i - 1], b);
            }
            pw[8] ^ pw[4] ^ pw[3] ^ pw[1] ^ pw[0] == 0
        })
        .expect("the AES polynomial splits in GF(256)")
}

/// A GF(2)-linear byte map given by the images of the eight unit vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitMatrix {
    pub columns: [u8; 8],
}

impl BitMatrix {
    pub fn apply(&self, x: u8) -> u8 {
        (0..8).filter(|i| (x >> i) & 1 == 1).fold(0, |acc, i| acc ^ self.columns[i])
    }

    pub fn compose(&self, inner: &BitMatrix) -> BitMatrix {
        let mut columns = [0u8; 8];
        for (i, c) in columns.iter_mut().enumerate() {
            *c = self.apply(inner.columns[i]);
        }
        BitMatrix { columns }
    }

    /// Inverse by exhaustive table lookup; panics if singular.
    pub fn inverse(&self) -> BitMatrix {
        let mut columns = [0u8; 8];
        for (i, c) in columns.iter_mut().enumerate() {
            *c = (0..=255u8).find(|&x| self.apply(x) == 1 << i).expect("matrix is invertible");
        }
        BitMatrix { columns }
    }

    /// Input bits feeding output bit `row`.
    pub fn row_terms(&self, row: usize) -> Vec<usize> {
        (0..8).filter(|&j| (self.columns[j] >> row) & 1 == 1).collect()
    }
}

/// Polynomial-basis AES byte to tower representation.
pub fn aes_to_tower() -> BitMatrix {
    let beta = aes_root();
    let mut columns = [1u8; 8];
    for i in 1..8 {
        columns[i] = gf256_mul(columns[i - 1], beta);
    }
    BitMatrix { columns }
}

/// The linear part of the AES affine map; the constant is 0x63.
pub fn aes_affine() -> BitMatrix {
    let mut columns = [0u8; 8];
    for (j, c) in columns.iter_mut().enumerate() {
        for i in 0..8 {
            if [0, 4, 5, 6, 7].iter().any(|&k| (i + k) % 8 == j) {
                *c |= 1 << i;
            }
        }
    }
    BitMatrix { columns }
}

pub const AES_AFFINE_CONSTANT: u8 = 0x63;

/// Matrix of multiplication by a constant in GF(4) or GF(16) (`bits` = 2 or 4).
pub fn const_mul_matrix(c: u8, bits: usize) -> Vec<u8> {
    (0..bits)
        .map(|j| if bits == 2 { gf4_mul(c, 1 << j) } else { gf16_mul(c, 1 << j) })
        .collect()
}

/// Matrix of `x -> LAMBDA·x^2` on GF(16) as column images.
pub fn sq_scale_matrix() -> Vec<u8> {
    let lam = lambda();
    (0..4).map(|j| gf16_mul(lam, gf16_mul(1 << j, 1 << j))).collect()
}
