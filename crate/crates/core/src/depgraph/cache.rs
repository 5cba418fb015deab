//! Binary cache of normalised adjacencies keyed by tweet id.
//!
//! Little-endian layout, repeated until end of file:
//!
//! ```text
//! u32 id_len | id_len bytes UTF-8 id | u32 n | u32 nnz | nnz × (u32 row, u32 col, f64 value)
//! ```
//!
//! Degrees are recovered from the diagonal (`Â_ii = 1 / D̃_ii`).

use std::io::{Read, Write};
use std::path::Path;

use super::NormalizedAdjacency;
use crate::{Error, Result};

pub fn write_cache<'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, &'a NormalizedAdjacency)>,
) -> Result<()> {
    let mut buf = Vec::new();
    for (id, adj) in entries {
        let u32_of = |x: usize| {
            u32::try_from(x).map_err(|_| Error::InvalidArgument(format!("{x} exceeds u32")))
        };
        buf.extend_from_slice(&u32_of(id.len())?.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        buf.extend_from_slice(&u32_of(adj.n())?.to_le_bytes());
        buf.extend_from_slice(&u32_of(adj.nnz())?.to_le_bytes());
        for (i, j, v) in adj.triplets() {
            buf.extend_from_slice(&(i as u32).to_le_bytes());
            buf.extend_from_slice(&(j as u32).to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Vec<(String, NormalizedAdjacency)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + len)
            .ok_or_else(|| corrupt("truncated record"))?;
        pos += len;
        Ok(s)
    };
    let mut out = Vec::new();
    while let Ok(head) = take(4) {
        let id_len = u32::from_le_bytes(head.try_into().unwrap()) as usize;
        let id =
            String::from_utf8(take(id_len)?.to_vec()).map_err(|_| corrupt("id is not UTF-8"))?;
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let nnz = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut triplets = Vec::with_capacity(nnz);
        let mut degrees = vec![0.0; n];
        for _ in 0..nnz {
            let i = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let j = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            if i >= n || j >= n {
                return Err(corrupt("index out of range"));
            }
            if i == j {
                degrees[i] = 1.0 / v;
            }
            triplets.push((i, j, v));
        }
        if degrees.iter().any(|&d| d <= 0.0) {
            return Err(corrupt("missing diagonal entry"));
        }
        out.push((id, NormalizedAdjacency::from_triplets(n, triplets, degrees)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{normalize, TweetGraph};

    #[test]
    fn round_trip() {
        let a = normalize(&TweetGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap(), 1.0).unwrap();
        let b = normalize(&TweetGraph::from_edges(1, []).unwrap(), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adj.bin");
        write_cache(&path, [("x1", &a), ("x2", &b)]).unwrap();
        let back = read_cache(&path).unwrap();
        assert_eq!(back[0].0, "x1");
        assert_eq!(back[0].1.to_dense(), a.to_dense());
        assert_eq!(back[0].1.degrees(), a.degrees());
        assert_eq!(back[1].1, b);
        let len = std::fs::metadata(&path).unwrap().len();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..len as usize - 3]).unwrap();
        assert!(read_cache(&path).is_err());
    }
}
