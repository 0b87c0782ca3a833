//! Feature tensors of a filtered manifest, held in memory.

use crate::data::container::read_tensor;
use crate::data::manifest::{Lang, Record};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub langs: Vec<Lang>,
    /// `[oe, ce, m]` labels per task
    pub labels: [Vec<usize>; 3],
    ptm_dim: usize,
    spec_dims: [usize; 3],
    ptm: Vec<f32>,
    spec: Vec<f32>,
}

impl Dataset {
    /// Reads every record's containers. PTM tensors must be `[D]` and
    /// spectrograms `[F, T, B]`, identical across records.
    pub fn load(records: &[Record]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        let mut ds = Dataset {
            ids: Vec::with_capacity(records.len()),
            langs: Vec::with_capacity(records.len()),
            labels: [vec![], vec![], vec![]],
            ptm_dim: 0,
            spec_dims: [0; 3],
            ptm: Vec::new(),
            spec: Vec::new(),
        };
        for (i, r) in records.iter().enumerate() {
            let p = read_tensor(&r.ptm_path)?;
            let s = read_tensor(&r.spec_path)?;
            if i == 0 {
                if p.rank() != 1 || s.rank() != 3 {
                    return Err(Error::InvalidArgument(format!(
                        "record {}: expected PTM [D] and spectrogram [F, T, B], got {:?} and {:?}",
                        r.id,
                        p.shape(),
                        s.shape()
                    )));
                }
                ds.ptm_dim = p.dim(0);
                ds.spec_dims = [s.dim(0), s.dim(1), s.dim(2)];
                ds.ptm.reserve(records.len() * p.len());
                ds.spec.reserve(records.len() * s.len());
            }
            if p.shape() != [ds.ptm_dim] {
                return Err(Error::shape(format!("PTM features of record {}", r.id), &[ds.ptm_dim], p.shape()));
            }
            if s.shape() != ds.spec_dims {
                return Err(Error::shape(format!("spectrogram of record {}", r.id), &ds.spec_dims, s.shape()));
            }
            ds.ptm.extend_from_slice(p.data());
            ds.spec.extend_from_slice(s.data());
            ds.ids.push(r.id.clone());
            ds.langs.push(r.lang);
            for (t, l) in r.labels().into_iter().enumerate() {
                ds.labels[t].push(l);
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ptm_dim(&self) -> usize {
        self.ptm_dim
    }

    pub fn spec_dims(&self) -> [usize; 3] {
        self.spec_dims
    }

    /// Inputs `[n, D]`, `[n, F, T, B]` and labels for the samples `idx`.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>, [Vec<usize>; 3])> {
        let d = self.ptm_dim;
        let v: usize = self.spec_dims.iter().product();
        let mut p = Vec::with_capacity(idx.len() * d);
        let mut s = Vec::with_capacity(idx.len() * v);
        for &i in idx {
            p.extend_from_slice(&self.ptm[i * d..(i + 1) * d]);
            s.extend_from_slice(&self.spec[i * v..(i + 1) * v]);
        }
        let [f, t, b] = self.spec_dims;
        let labels = [0, 1, 2].map(|task| idx.iter().map(|&i| self.labels[task][i]).collect());
        Ok((Tensor::from_vec(&[idx.len(), d], p)?, Tensor::from_vec(&[idx.len(), f, t, b], s)?, labels))
    }

    /// The samples `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let d = self.ptm_dim;
        let v: usize = self.spec_dims.iter().product();
        Dataset {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            langs: idx.iter().map(|&i| self.langs[i]).collect(),
            labels: [0, 1, 2].map(|t| idx.iter().map(|&i| self.labels[t][i]).collect()),
            ptm_dim: d,
            spec_dims: self.spec_dims,
            ptm: idx.iter().flat_map(|&i| self.ptm[i * d..(i + 1) * d].iter().copied()).collect(),
            spec: idx.iter().flat_map(|&i| self.spec[i * v..(i + 1) * v].iter().copied()).collect(),
        }
    }
}
