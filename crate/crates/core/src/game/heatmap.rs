use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::table::ValueTable;
use crate::error::{Error, Result};
use crate::reward::Player;

/// Interpolated values over the grid nodes of two free dimensions, other
/// dimensions held fixed. `values[i][j]` pairs `rows[i]` with `cols[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSlice {
    pub row_dim: String,
    pub col_dim: String,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn export_heatmap_slice(
    table: &ValueTable,
    k: usize,
    player: Player,
    fixed: &BTreeMap<String, f64>,
    free: [&str; 2],
) -> Result<HeatmapSlice> {
    let row = table.grid.dim_index(free[0])?;
    let col = table.grid.dim_index(free[1])?;
    if row == col {
        return Err(Error::config("free", "the two free dimensions must differ"));
    }
    let mut point = vec![0.0; table.ndims()];
    for name in fixed.keys() {
        let i = table.grid.dim_index(name)?;
        if i == row || i == col {
            return Err(Error::config(name.clone(), "dimension is both fixed and free"));
        }
    }
    for (i, d) in table.grid.dims.iter().enumerate() {
        if i == row || i == col {
            continue;
        }
        point[i] = *fixed
            .get(&d.name)
            .ok_or_else(|| Error::config(d.name.clone(), "non-free dimension needs a fixed value"))?;
    }
    let rows = table.grid.dims[row].nodes();
    let cols = table.grid.dims[col].nodes();
    let mut values = Vec::with_capacity(rows.len());
    for &r in &rows {
        point[row] = r;
        let mut line = Vec::with_capacity(cols.len());
        for &c in &cols {
            point[col] = c;
            line.push(table.lookup(&point, k, player)?);
        }
        values.push(line);
    }
    Ok(HeatmapSlice {
        row_dim: free[0].to_string(),
        col_dim: free[1].to_string(),
        rows,
        cols,
        values,
    })
}

impl HeatmapSlice {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    /// CSV: header `row_dim\col_dim, c0, c1, …`, then one line per row
    /// coordinate.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![format!("{}\\{}", self.row_dim, self.col_dim)];
        header.extend(self.cols.iter().map(|c| c.to_string()));
        out.write_record(&header)?;
        for (r, line) in self.rows.iter().zip(&self.values) {
            let mut rec = vec![r.to_string()];
            rec.extend(line.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Binary PPM (P6), one pixel per node, row `i` of the image is row `i`
    /// of the slice. Colors run linearly from red (minimum) to blue
    /// (maximum); a constant slice renders in the midpoint color.
    pub fn to_ppm(&self) -> Vec<u8> {
        let (h, w) = self.shape();
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for line in &self.values {
            for &v in line {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                out.extend_from_slice(&[((1.0 - t) * 255.0).round() as u8, 0, (t * 255.0).round() as u8]);
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GridSpec, ModelTag};

    #[test]
    fn constant_table_gives_constant_matrix_and_uniform_ppm() {
        let t = ValueTable::constant(ModelTag::ThreeD, GridSpec::default_3d(), 0, 2.5);
        let fixed = BTreeMap::from([("v_rel".to_string(), 0.0)]);
        let s = export_heatmap_slice(&t, 0, Player::Av, &fixed, ["x_rel", "y_av"]).unwrap();
        assert_eq!(s.shape(), (101, 17));
        assert!(s.values.iter().flatten().all(|&v| v == 2.5));
        let ppm = s.to_ppm();
        let header = b"P6\n17 101\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        let pixels = &ppm[header.len()..];
        assert_eq!(pixels.len(), 101 * 17 * 3);
        assert!(pixels.chunks(3).all(|p| p == &pixels[..3]));
    }

    #[test]
    fn entries_match_lookups() {
        let t = ValueTable::from_fn(ModelTag::ThreeD, GridSpec::default_3d(), 1, |p| {
            p[0] * 0.1 + p[1] * p[2]
        });
        let fixed = BTreeMap::from([("y_av".to_string(), 2.3)]);
        let s = export_heatmap_slice(&t, 1, Player::Human, &fixed, ["v_rel", "x_rel"]).unwrap();
        for (i, &v) in s.rows.iter().enumerate().step_by(7) {
            for (j, &x) in s.cols.iter().enumerate().step_by(13) {
                let direct = t.lookup(&[x, 2.3, v], 1, Player::Human).unwrap();
                assert_eq!(s.values[i][j], direct);
            }
        }
    }

    #[test]
    fn unknown_dimension_rejected() {
        let t = ValueTable::constant(ModelTag::ThreeD, GridSpec::default_3d(), 0, 0.0);
        let fixed = BTreeMap::from([("speed".to_string(), 0.0)]);
        assert!(matches!(
            export_heatmap_slice(&t, 0, Player::Av, &fixed, ["x_rel", "y_av"]),
            Err(Error::UnknownDimension(_))
        ));
        assert!(export_heatmap_slice(&t, 0, Player::Av, &BTreeMap::new(), ["x_rel", "lane"]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = ValueTable::constant(ModelTag::ThreeD, GridSpec::default_3d(), 0, 1.0);
        let fixed = BTreeMap::from([("v_rel".to_string(), 0.0)]);
        let s = export_heatmap_slice(&t, 0, Player::Av, &fixed, ["x_rel", "y_av"]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 102);
        assert_eq!(lines[0].split(',').count(), 18);
        assert!(lines[0].starts_with("x_rel\\y_av,0,"));
    }
}
