use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::{DiffError, Result};

/// Version written into every parameter file header.
pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Named, ordered collection of trainable arrays.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    params: Vec<Entry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
    ) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(DiffError::DuplicateParam(name.to_string()));
        }
        if value.len() != rows * cols {
            return Err(DiffError::ShapeMismatch {
                op: "param",
                lhs: (rows, cols),
                rhs: (value.len(), 1),
            });
        }
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            rows,
            cols,
            grad: vec![0.0; value.len()],
            value,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn by_name(&self, name: &str) -> Result<&Param> {
        Ok(self.get(self.id_of(name)?))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients of every parameter leaf in `graph` to the stored
    /// gradients. Parameters the backward pass never reached are left alone.
    pub fn accumulate(&mut self, graph: &Graph) {
        let mut leaves: Vec<_> = graph.param_leaves().collect();
        leaves.sort_by_key(|(id, _)| *id);
        for (id, t) in leaves {
            if let Some(g) = graph.grad(t) {
                for (a, b) in self.params[id.0].grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    /// Adds `other`'s gradients into this store. Both must have the same layout.
    pub fn add_grads_from(&mut self, other: &ParamStore) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.grad.iter_mut().zip(&b.grad) {
                *x += y;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f, meta)?;
        f.flush()?;
        Ok(())
    }

    /// Writes `[u64 LE header length][JSON header][f64 LE values]`.
    pub fn write_to(&self, w: &mut impl Write, meta: serde_json::Value) -> Result<()> {
        let mut offset = 0;
        let entries = self
            .params
            .iter()
            .map(|p| {
                let e = Entry {
                    name: p.name.clone(),
                    shape: [p.rows, p.cols],
                    offset,
                };
                offset += p.value.len();
                e
            })
            .collect();
        let header = Header {
            format_version: PARAM_FORMAT_VERSION,
            params: entries,
            meta,
        };
        let json = serde_json::to_vec(&header).map_err(|e| DiffError::Format(e.to_string()))?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in &self.params {
            for v in &p.value {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a store and its metadata.
    pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    pub fn read_from(r: &mut impl Read) -> Result<(ParamStore, serde_json::Value)> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| DiffError::Format("truncated header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(DiffError::Format(format!(
                "implausible header length {len}"
            )));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)
            .map_err(|_| DiffError::Format("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| DiffError::Format(e.to_string()))?;
        if header.format_version != PARAM_FORMAT_VERSION {
            return Err(DiffError::Format(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        if data.len() % 8 != 0 {
            return Err(DiffError::Format(
                "data section is not a whole number of f64 values".into(),
            ));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut store = ParamStore::new();
        for e in header.params {
            let n = e.shape[0] * e.shape[1];
            let slice = values.get(e.offset..e.offset + n).ok_or_else(|| {
                DiffError::Format(format!(
                    "parameter `{}` extends past the data section",
                    e.name
                ))
            })?;
            store
                .add(&e.name, e.shape[0], e.shape[1], slice.to_vec())
                .map_err(|err| match err {
                    DiffError::DuplicateParam(n) => {
                        DiffError::Format(format!("parameter `{n}` listed twice"))
                    }
                    other => other,
                })?;
        }
        Ok((store, header.meta))
    }

    /// Copies values from `other`, which must contain the same names with the
    /// same shapes. The error names the first offending parameter.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &self.params {
            let q = other.by_name(&p.name).map_err(|_| {
                DiffError::Format(format!("parameter `{}` missing from file", p.name))
            })?;
            if (q.rows, q.cols) != (p.rows, p.cols) {
                return Err(DiffError::Format(format!(
                    "parameter `{}` has shape {}x{} in file, expected {}x{}",
                    p.name, q.rows, q.cols, p.rows, p.cols
                )));
            }
        }
        if let Some(extra) = other.iter().find(|q| !self.by_name.contains_key(&q.name)) {
            return Err(DiffError::Format(format!(
                "unexpected parameter `{}` in file",
                extra.name
            )));
        }
        for p in &mut self.params {
            p.value.clone_from(&other.by_name(&p.name)?.value);
        }
        Ok(())
    }
}
