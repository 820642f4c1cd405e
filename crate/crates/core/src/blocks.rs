//! Block-aware SVD, QR and matrix products.
//!
//! Conserved charges make the matrices met in MPS updates block diagonal up
//! to a permutation of rows and columns. The blocks are found as connected
//! components of the exact nonzero pattern and factorized independently,
//! which is both faster and keeps exact zeros exact, so the structure
//! survives from one update to the next.

use ndarray::{s, Array2};
use ndarray_linalg::{JobSvd, SVDDCInto, SVDInto, QR};

use crate::{Error, Result, C64};

/// Rows and columns of one block, each ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the bipartite row/column graph of nonzero
/// entries, ordered by smallest row. All-zero rows and columns belong to no
/// block.
pub fn find_blocks(m: &Array2<C64>) -> Vec<Block> {
    let (nr, nc) = m.dim();
    let mut parent: Vec<usize> = (0..nr + nc).collect();
    let mut touched = vec![false; nr + nc];
    for ((i, j), z) in m.indexed_iter() {
        if z.re != 0.0 || z.im != 0.0 {
            touched[i] = true;
            touched[nr + j] = true;
            let (a, b) = (find(&mut parent, i), find(&mut parent, nr + j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut index_of_root = vec![usize::MAX; nr + nc];
    let mut blocks: Vec<Block> = Vec::new();
    for v in 0..nr + nc {
        if !touched[v] {
            continue;
        }
        let root = find(&mut parent, v);
        if index_of_root[root] == usize::MAX {
            index_of_root[root] = blocks.len();
            blocks.push(Block { rows: Vec::new(), cols: Vec::new() });
        }
        let b = &mut blocks[index_of_root[root]];
        if v < nr {
            b.rows.push(v);
        } else {
            b.cols.push(v - nr);
        }
    }
    blocks
}

fn extract(m: &Array2<C64>, b: &Block) -> Array2<C64> {
    Array2::from_shape_fn((b.rows.len(), b.cols.len()), |(i, j)| m[[b.rows[i], b.cols[j]]])
}

fn is_whole(m: &Array2<C64>, blocks: &[Block]) -> bool {
    blocks.len() == 1 && blocks[0].rows.len() == m.nrows() && blocks[0].cols.len() == m.ncols()
}

/// `a·b`, multiplying block by block along the blocks of `a`.
pub fn matmul(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let blocks = find_blocks(a);
    if is_whole(a, &blocks) {
        return a.dot(b);
    }
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    let mut used = vec![false; b.ncols()];
    for blk in &blocks {
        let mut cols = Vec::new();
        for &k in &blk.cols {
            for (j, z) in b.row(k).indexed_iter() {
                if !used[j] && (z.re != 0.0 || z.im != 0.0) {
                    used[j] = true;
                    cols.push(j);
                }
            }
        }
        if cols.is_empty() {
            continue;
        }
        let sub_a = extract(a, blk);
        let sub_b = Array2::from_shape_fn((blk.cols.len(), cols.len()), |(i, j)| b[[blk.cols[i], cols[j]]]);
        let prod = sub_a.dot(&sub_b);
        for (i, &r) in blk.rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[[r, c]] = prod[[i, j]];
            }
        }
        for &c in &cols {
            used[c] = false;
        }
    }
    out
}

/// Thin SVD of a dense matrix. Divide and conquer first; the QR-iteration
/// driver is the fallback for the rare inputs where it fails.
pub fn dense_svd(m: Array2<C64>) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    let fallback = m.clone();
    match m.svddc_into(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => Ok((u, s.to_vec(), vt)),
        _ => match fallback.svd_into(true, true)? {
            (Some(u), s, Some(vt)) => {
                let k = s.len();
                Ok((u.slice(s![.., ..k]).to_owned(), s.to_vec(), vt.slice(s![..k, ..]).to_owned()))
            }
            _ => Err(Error::Linalg("SVD returned no singular vectors".into())),
        },
    }
}

/// Thin SVD `m = U·diag(s)·Vt` with `s` descending. Only the nonzero blocks
/// contribute, so `s` may be shorter than `min(rows, cols)`.
pub fn svd(m: Array2<C64>) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    let blocks = find_blocks(&m);
    if is_whole(&m, &blocks) {
        return dense_svd(m);
    }
    let (nr, nc) = m.dim();
    let parts = blocks
        .iter()
        .map(|b| dense_svd(extract(&m, b)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<(f64, usize, usize)> = parts
        .iter()
        .enumerate()
        .flat_map(|(bi, (_, s, _))| s.iter().enumerate().map(move |(k, &v)| (v, bi, k)))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = order.len();
    let mut u = Array2::zeros((nr, total));
    let mut vt = Array2::zeros((total, nc));
    let mut s = Vec::with_capacity(total);
    for (col, &(v, bi, k)) in order.iter().enumerate() {
        let (bu, _, bvt) = &parts[bi];
        let b = &blocks[bi];
        for (i, &r) in b.rows.iter().enumerate() {
            u[[r, col]] = bu[[i, k]];
        }
        for (j, &c) in b.cols.iter().enumerate() {
            vt[[col, c]] = bvt[[k, j]];
        }
        s.push(v);
    }
    Ok((u, s, vt))
}

/// Singular values, descending, of the nonzero blocks.
pub fn singular_values(m: Array2<C64>) -> Result<Vec<f64>> {
    let dense = |m: Array2<C64>| -> Result<Vec<f64>> {
        let fallback = m.clone();
        match m.svddc_into(JobSvd::None) {
            Ok((_, s, _)) => Ok(s.to_vec()),
            Err(_) => Ok(fallback.svd_into(false, false)?.1.to_vec()),
        }
    };
    let blocks = find_blocks(&m);
    if is_whole(&m, &blocks) {
        return dense(m);
    }
    let mut all = Vec::new();
    for b in &blocks {
        all.extend(dense(extract(&m, b))?);
    }
    all.sort_by(|a, b| b.total_cmp(a));
    Ok(all)
}

/// Thin QR `m = Q·R` with orthonormal columns in `Q`. The inner dimension
/// is the summed rank bound of the blocks, and at least one.
pub fn qr(m: Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let blocks = find_blocks(&m);
    if is_whole(&m, &blocks) {
        return Ok(m.qr()?);
    }
    let (nr, nc) = m.dim();
    let parts = blocks
        .iter()
        .map(|b| Ok(extract(&m, b).qr()?))
        .collect::<Result<Vec<_>>>()?;
    let inner: usize = parts.iter().map(|(q, _)| q.ncols()).sum();
    if inner == 0 {
        let mut q = Array2::zeros((nr, 1));
        q[[0, 0]] = C64::from(1.0);
        return Ok((q, Array2::zeros((1, nc))));
    }
    let mut q = Array2::zeros((nr, inner));
    let mut r = Array2::zeros((inner, nc));
    let mut offset = 0;
    for (b, (bq, br)) in blocks.iter().zip(&parts) {
        let k = bq.ncols();
        for (i, &row) in b.rows.iter().enumerate() {
            for c in 0..k {
                q[[row, offset + c]] = bq[[i, c]];
            }
        }
        for c in 0..k {
            for (j, &col) in b.cols.iter().enumerate() {
                r[[offset + c, col]] = br[[c, j]];
            }
        }
        offset += k;
    }
    Ok((q, r))
}
