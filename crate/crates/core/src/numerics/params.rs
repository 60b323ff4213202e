use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One named tensor inside a parameter section.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A flat parameter vector with its recorded tensor layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub tensors: Vec<ParamTensor>,
    pub values: Vec<f64>,
}

impl Section {
    /// Zero-valued section with the given `(name, rows, cols)` layout.
    pub fn with_layout(name: &str, layout: &[(&str, usize, usize)]) -> Self {
        let mut tensors = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for &(tname, rows, cols) in layout {
            tensors.push(ParamTensor {
                name: tname.to_string(),
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        Section {
            name: name.to_string(),
            tensors,
            values: vec![0.0; offset],
        }
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn slice(&self, tensor: usize) -> &[f64] {
        let t = &self.tensors[tensor];
        &self.values[t.offset..t.offset + t.len()]
    }

    pub fn slice_mut(&mut self, tensor: usize) -> &mut [f64] {
        let t = &self.tensors[tensor];
        let (o, l) = (t.offset, t.len());
        &mut self.values[o..o + l]
    }

    pub fn tensor(&self, tensor: usize) -> Tensor {
        let t = &self.tensors[tensor];
        Tensor::new(t.rows, t.cols, self.slice(tensor).to_vec()).expect("layout is consistent")
    }
}

/// Addresses one tensor: `(section index, tensor index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub section: usize,
    pub tensor: usize,
}

/// Named parameter sections, one per network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    sections: Vec<Section>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams::default()
    }

    pub fn push(&mut self, section: Section) -> Result<usize> {
        if self.section_index(&section.name).is_some() {
            return Err(Error::invalid(format!(
                "duplicate parameter section '{}'",
                section.name
            )));
        }
        self.sections.push(section);
        Ok(self.sections.len() - 1)
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn sections_mut(&mut self) -> &mut [Section] {
        &mut self.sections
    }

    pub fn section_index(&self, name: &str) -> Option<usize> {
        self.sections.iter().position(|s| s.name == name)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section_mut(&mut self, name: &str) -> Option<&mut Section> {
        self.sections.iter_mut().find(|s| s.name == name)
    }

    pub fn remove_section(&mut self, name: &str) -> Option<Section> {
        let i = self.section_index(name)?;
        Some(self.sections.remove(i))
    }

    pub fn key(&self, section: &str, tensor: &str) -> Result<ParamKey> {
        let s = self
            .section_index(section)
            .ok_or_else(|| Error::invalid(format!("missing parameter section '{section}'")))?;
        let t = self.sections[s]
            .tensor_index(tensor)
            .ok_or_else(|| Error::invalid(format!("missing tensor '{section}.{tensor}'")))?;
        Ok(ParamKey { section: s, tensor: t })
    }

    pub fn tensor(&self, key: ParamKey) -> Tensor {
        self.sections[key.section].tensor(key.tensor)
    }

    pub fn qualified_name(&self, key: ParamKey) -> String {
        let s = &self.sections[key.section];
        format!("{}.{}", s.name, s.tensors[key.tensor].name)
    }

    pub fn count(&self) -> usize {
        self.sections.iter().map(|s| s.values.len()).sum()
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.sections.iter().enumerate().flat_map(|(s, sec)| {
            (0..sec.tensors.len()).map(move |t| ParamKey { section: s, tensor: t })
        })
    }
}

/// Gradient buffers laid out exactly like a [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub sections: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            sections: params
                .sections()
                .iter()
                .map(|s| vec![0.0; s.values.len()])
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients, weight: f64) {
        for (a, b) in self.sections.iter_mut().zip(&other.sections) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += weight * y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in &mut self.sections {
            for x in s.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn slice<'a>(&'a self, params: &ModelParams, key: ParamKey) -> &'a [f64] {
        let t = &params.sections()[key.section].tensors[key.tensor];
        &self.sections[key.section][t.offset..t.offset + t.len()]
    }
}
