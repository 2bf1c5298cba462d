//! Form field containers.
//!
//! Two encodings share one header `{degree, n[4], L[4], component order}`:
//!
//! * JSON (`*.json`): `{"format": "jforms-form", "version": 1, "degree",
//!   "n", "L", "components": ["dx12", ...], "data": [[...], ...]}` with
//!   one row-major array per component.
//! * Binary (any other extension), all little-endian:
//!   `b"JFRM"`, `u32` version (= 1), `u32` degree, `4 × u32` n,
//!   `4 × f64` L, `u32` component count, then each component as
//!   `n₀n₁n₂n₃` `f64` values in row-major order (last axis fastest).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FormField, Grid};
use crate::error::{Error, Result};
use crate::exterior;

const MAGIC: &[u8; 4] = b"JFRM";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormContainer {
    pub format: String,
    pub version: u32,
    pub degree: usize,
    pub n: [usize; 4],
    #[serde(rename = "L")]
    pub l: [f64; 4],
    pub components: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl FormContainer {
    pub fn new(grid: &Grid, form: &FormField) -> Self {
        FormContainer {
            format: "jforms-form".into(),
            version: VERSION,
            degree: form.degree(),
            n: grid.n(),
            l: grid.periods(),
            components: exterior::component_names(form.degree()),
            data: (0..form.components()).map(|c| form.component(c).to_vec()).collect(),
        }
    }

    pub fn into_form(self) -> Result<(Grid, FormField)> {
        if self.version != VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        if self.degree > 4 {
            return Err(Error::Format(format!("degree {} > 4", self.degree)));
        }
        if self.components != exterior::component_names(self.degree) {
            return Err(Error::Format(format!("unexpected component order {:?}", self.components)));
        }
        let grid = Grid::new(self.n, self.l)?;
        if self.data.len() != exterior::components(self.degree) {
            return Err(Error::Format("component count does not match degree".into()));
        }
        let mut flat = Vec::with_capacity(grid.len() * self.data.len());
        for comp in self.data {
            if comp.len() != grid.len() {
                return Err(Error::Format(format!(
                    "component has {} values, grid has {} points",
                    comp.len(),
                    grid.len()
                )));
            }
            flat.extend(comp);
        }
        let form = FormField::from_vec(&grid, self.degree, flat)?;
        Ok((grid, form))
    }
}

pub fn encode_binary(grid: &Grid, form: &FormField) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * form.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(form.degree() as u32).to_le_bytes());
    for n in grid.n() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in grid.periods() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&(form.components() as u32).to_le_bytes());
    for v in form.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<(Grid, FormField)> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::Format("truncated binary container".into()));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let degree = u32_at(take(4)?) as usize;
    if degree > 4 {
        return Err(Error::Format(format!("degree {degree} > 4")));
    }
    let mut n = [0usize; 4];
    for v in n.iter_mut() {
        *v = u32_at(take(4)?) as usize;
    }
    let mut l = [0f64; 4];
    for v in l.iter_mut() {
        *v = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    }
    let comps = u32_at(take(4)?) as usize;
    if comps != exterior::components(degree) {
        return Err(Error::Format("component count does not match degree".into()));
    }
    let grid = Grid::new(n, l)?;
    let count = comps * grid.len();
    let body = take(8 * count)?;
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !cursor.is_empty() {
        return Err(Error::Format("trailing bytes after data".into()));
    }
    let form = FormField::from_vec(&grid, degree, data)?;
    Ok((grid, form))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Writes JSON for `*.json` paths and the binary container otherwise.
pub fn write_form(path: &Path, grid: &Grid, form: &FormField) -> Result<()> {
    if is_json(path) {
        fs::write(path, serde_json::to_vec(&FormContainer::new(grid, form))?)?;
    } else {
        fs::write(path, encode_binary(grid, form))?;
    }
    Ok(())
}

/// Reads either encoding; the binary magic takes precedence over the extension.
pub fn read_form(path: &Path) -> Result<(Grid, FormField)> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        serde_json::from_slice::<FormContainer>(&bytes)?.into_form()
    }
}
