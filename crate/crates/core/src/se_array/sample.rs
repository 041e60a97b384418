use std::io::{Read, Write};
use std::sync::Arc;

use super::latent::{permute_index, LatentTable};
use super::lattice::{MultiIndex, Shape};
use crate::error::{Error, Result};

/// An observed K-way array with exactly one record per cell.
#[derive(Clone, Debug)]
pub struct ClusteredSample {
    shape: Shape,
    fields: Arc<Vec<String>>,
    /// Row-major over cells, `fields.len()` values per cell.
    values: Vec<f64>,
    latent: Option<LatentTable>,
}

impl ClusteredSample {
    pub fn new(shape: Shape, fields: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.cell_count() * fields.len() {
            return Err(Error::InvalidShape(format!(
                "{} values for {} cells of {} fields",
                values.len(),
                shape.cell_count(),
                fields.len()
            )));
        }
        Ok(Self { shape, fields: Arc::new(fields), values, latent: None })
    }

    pub fn with_latent(mut self, table: LatentTable) -> Self {
        self.latent = Some(table);
        self
    }

    /// Drops the latent table, leaving observed data only.
    pub fn without_latent(mut self) -> Self {
        self.latent = None;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn width(&self) -> usize {
        self.fields.len()
    }

    pub fn len(&self) -> usize {
        self.shape.cell_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latent(&self) -> Option<&LatentTable> {
        self.latent.as_ref()
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::MissingField(name.to_string()))
    }

    /// Record of the cell at row-major position `lin`.
    pub fn record(&self, lin: usize) -> &[f64] {
        let w = self.width();
        &self.values[lin * w..(lin + 1) * w]
    }

    pub fn record_at(&self, idx: &MultiIndex) -> &[f64] {
        self.record(self.shape.linear_index(idx))
    }

    pub fn records(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width().max(1))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.field_index(name)?;
        Ok(self.records().map(|r| r[j]).collect())
    }

    /// Ē_N f.
    pub fn mean_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.records().map(f).sum::<f64>() / self.len() as f64
    }

    /// Moves cell (i_1, ..., i_K) to (π_1(i_1), ..., π_K(i_K)); permutations
    /// are 1-based. An attached latent table is permuted alongside.
    pub fn permute(&self, perms: &[Vec<usize>]) -> Result<ClusteredSample> {
        if perms.len() != self.shape.order() {
            return Err(Error::Permutation(format!(
                "{} permutations for {} dimensions",
                perms.len(),
                self.shape.order()
            )));
        }
        for (k, p) in perms.iter().enumerate() {
            let nk = self.shape.dim(k);
            if p.len() != nk {
                return Err(Error::Permutation(format!(
                    "dimension {} has size {nk} but permutation has length {}",
                    k + 1,
                    p.len()
                )));
            }
            let mut seen = vec![false; nk];
            for &v in p {
                if v == 0 || v > nk || std::mem::replace(&mut seen[v - 1], true) {
                    return Err(Error::Permutation(format!(
                        "dimension {} permutation is not a bijection of 1..={nk}",
                        k + 1
                    )));
                }
            }
        }
        let w = self.width();
        let mut values = vec![0.0; self.values.len()];
        for lin in 0..self.len() {
            let moved = permute_index(&self.shape.cell_at(lin), perms);
            let to = self.shape.linear_index(&moved);
            values[to * w..(to + 1) * w].copy_from_slice(self.record(lin));
        }
        Ok(ClusteredSample {
            shape: self.shape.clone(),
            fields: self.fields.clone(),
            values,
            latent: self.latent.as_ref().map(|t| t.permuted(perms)),
        })
    }

    /// Reads the layout written by [`ClusteredSample::write_csv`]. The shape is
    /// the largest coordinate seen in each dimension and every cell must
    /// appear exactly once.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let order = header.iter().take_while(|h| h.starts_with("i_")).count();
        if order == 0 {
            return Err(Error::Config("sample CSV needs leading i_1, ..., i_K columns".into()));
        }
        let fields = header[order..].to_vec();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{s}`")));
            let coords = rec
                .iter()
                .take(order)
                .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad index `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            let values = rec.iter().skip(order).map(parse).collect::<Result<Vec<_>>>()?;
            if values.len() != fields.len() || coords.contains(&0) {
                return Err(Error::Config(format!("malformed sample row {:?}", rec)));
            }
            rows.push((coords, values));
        }
        let dims: Vec<usize> = (0..order).map(|k| rows.iter().map(|(c, _)| c[k]).max().unwrap_or(0)).collect();
        let shape = Shape::new(dims)?;
        if rows.len() != shape.cell_count() {
            return Err(Error::InvalidShape(format!("{} rows for {} cells of {shape}", rows.len(), shape.cell_count())));
        }
        let w = fields.len();
        let mut values = vec![0.0; rows.len() * w];
        let mut seen = vec![false; rows.len()];
        for (coords, v) in rows {
            let lin = shape.linear_index(&MultiIndex::new(coords));
            if std::mem::replace(&mut seen[lin], true) {
                return Err(Error::InvalidShape(format!("cell {} appears twice", shape.cell_at(lin))));
            }
            values[lin * w..(lin + 1) * w].copy_from_slice(&v);
        }
        Self::new(shape, fields, values)
    }

    /// CSV with columns `i_1, ..., i_K, <fields>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.shape.order()).map(|k| format!("i_{k}")).collect();
        header.extend(self.fields.iter().cloned());
        wtr.write_record(&header)?;
        for lin in 0..self.len() {
            let idx = self.shape.cell_at(lin);
            let mut row: Vec<String> = idx.coords().iter().map(|c| c.to_string()).collect();
            row.extend(self.record(lin).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let values: Vec<f64> = (0..12).map(|v| v as f64 * 0.25 - 1.0).collect();
        let s = ClusteredSample::new(shape, vec!["y".into(), "d".into()], values).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ClusteredSample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.shape(), s.shape());
        assert_eq!(back.fields(), s.fields());
        assert!(back.records().zip(s.records()).all(|(a, b)| a == b));
    }

    #[test]
    fn csv_rejects_missing_cells() {
        let text = "i_1,i_2,y\n1,1,0.5\n2,2,1.5\n";
        assert!(ClusteredSample::read_csv(text.as_bytes()).is_err());
    }
}
