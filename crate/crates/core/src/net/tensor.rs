//! Dense channel-major tensors for the network.

use super::scalar::Scalar;

/// Channels x height x width, row-major within a channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Feat2<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Feat2<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::ZERO; c * h * w],
        }
    }

    pub fn from_data(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    #[inline]
    pub fn idx(&self, ch: usize, y: usize, x: usize) -> usize {
        (ch * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, ch: usize, y: usize, x: usize) -> T {
        self.data[self.idx(ch, y, x)]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, y: usize, x: usize, v: T) {
        let i = self.idx(ch, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w]
    }

    pub fn map_to<U: Scalar>(&self) -> Feat2<U> {
        Feat2 {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Channels x nx x ny x nz, stored with x fastest (layout [c][z][y][x]) so
/// the longest voxel dimension is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Feat3<T> {
    pub c: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Feat3<T> {
    pub fn zeros(c: usize, nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            c,
            nx,
            ny,
            nz,
            data: vec![T::ZERO; c * nx * ny * nz],
        }
    }

    /// Takes data already laid out in this tensor's flat order.
    pub fn from_data(c: usize, nx: usize, ny: usize, nz: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * nx * ny * nz);
        Self {
            c,
            nx,
            ny,
            nz,
            data,
        }
    }

    pub fn from_fn(
        c: usize,
        nx: usize,
        ny: usize,
        nz: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut out = Self::zeros(c, nx, ny, nz);
        for ch in 0..c {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let i = out.idx(ch, x, y, z);
                        out.data[i] = f(ch, x, y, z);
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, ch: usize, x: usize, y: usize, z: usize) -> usize {
        ((ch * self.nz + z) * self.ny + y) * self.nx + x
    }

    pub fn map_to<U: Scalar>(&self) -> Feat3<U> {
        Feat3 {
            c: self.c,
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}
