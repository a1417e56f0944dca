//! Safe strided wrappers around the `matrixmultiply` GEMM kernels.

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T> View<'a, T> {
    /// A `rows × cols` row-major matrix stored in `data`.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "gemm view out of bounds");
        Self {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// The transpose of a stored `rows × cols` row-major matrix, i.e. a
    /// `cols × rows` view.
    pub fn transposed(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "gemm view out of bounds");
        Self {
            data,
            rows: cols,
            cols: rows,
            rs: 1,
            cs: cols as isize,
        }
    }

    /// Stored matrix, optionally transposed.
    pub fn of(data: &'a [T], rows: usize, cols: usize, transpose: bool) -> Self {
        if transpose {
            Self::transposed(data, rows, cols)
        } else {
            Self::new(data, rows, cols)
        }
    }
}

macro_rules! gemm_impl {
    ($name:ident, $t:ty, $kernel:path) => {
        #[allow(clippy::too_many_arguments)]
        pub fn $name(
            m: usize,
            k: usize,
            n: usize,
            alpha: $t,
            a: View<'_, $t>,
            b: View<'_, $t>,
            beta: $t,
            c: &mut [$t],
        ) {
            assert_eq!((a.rows, a.cols), (m, k), "gemm: lhs view extents");
            assert_eq!((b.rows, b.cols), (k, n), "gemm: rhs view extents");
            assert!(c.len() >= m * n, "gemm: output too small");
            if m == 0 || n == 0 {
                return;
            }
            // SAFETY: the views were bounds-checked at construction and the
            // extents are asserted above; `c` is a dense m×n row-major block.
            unsafe {
                $kernel(
                    m,
                    k,
                    n,
                    alpha,
                    a.data.as_ptr(),
                    a.rs,
                    a.cs,
                    b.data.as_ptr(),
                    b.rs,
                    b.cs,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    };
}

gemm_impl!(sgemm, f32, matrixmultiply::sgemm);
gemm_impl!(dgemm, f64, matrixmultiply::dgemm);
