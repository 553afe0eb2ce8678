//! Field dump: a `nx,ny,nz` header line, the dims, then one value per line
//! in linear order (x fastest, z slowest). Values use the shortest text that
//! parses back to the same bits.

use std::fmt::Debug;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::FormatError;
use fvflow_core::{Field, MeshDims, Real};

pub fn write_field<T: Real + Debug, W: Write>(
    field: &Field<T>,
    mut out: W,
) -> Result<(), FormatError> {
    let d = field.dims();
    writeln!(out, "nx,ny,nz")?;
    writeln!(out, "{},{},{}", d.nx, d.ny, d.nz)?;
    for v in field.as_slice() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_field<T: Real + FromStr, R: BufRead>(input: R) -> Result<Field<T>, FormatError> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), FormatError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(FormatError::parse(0, format!("missing {what}"))),
        }
    };
    let (n, header) = next("header")?;
    if header.trim() != "nx,ny,nz" {
        return Err(FormatError::parse(n, "expected header `nx,ny,nz`"));
    }
    let (n, dims) = next("dimensions")?;
    let parts: Vec<usize> = dims
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| FormatError::parse(n, "bad dimensions"))?;
    let [nx, ny, nz] = parts[..] else {
        return Err(FormatError::parse(n, "expected three dimensions"));
    };
    let dims = MeshDims::new(nx, ny, nz)?;
    let mut data = Vec::with_capacity(dims.cell_count());
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        data.push(
            line.trim()
                .parse::<T>()
                .map_err(|_| FormatError::parse(i + 1, "bad value"))?,
        );
    }
    Ok(Field::from_vec(dims, data)?)
}

/// One z-plane as `x,y,value` rows, for plotting.
pub fn write_slice<T: Real + Debug, W: Write>(
    field: &Field<T>,
    z: usize,
    out: W,
) -> Result<(), FormatError> {
    let d = field.dims();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for y in 0..d.ny {
        for x in 0..d.nx {
            let v = field.at(fvflow_core::CellIndex::new(x, y, z));
            w.write_record([x.to_string(), y.to_string(), format!("{v:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let d = MeshDims::new(3, 2, 2).unwrap();
        let f = Field::from_fn(d, |c| {
            (c.x as f32 * 0.1 - c.y as f32) * 1e-7 + c.z as f32 / 3.0
        });
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let back: Field<f32> = read_field(buf.as_slice()).unwrap();
        assert!(back.bitwise_eq(&f));
        let g = f.cast::<f64>();
        buf.clear();
        write_field(&g, &mut buf).unwrap();
        assert!(read_field::<f64, _>(buf.as_slice()).unwrap().bitwise_eq(&g));
    }

    #[test]
    fn slice_rows() {
        let d = MeshDims::new(2, 2, 2).unwrap();
        let f = Field::from_fn(d, |c| (c.x + 2 * c.y + 4 * c.z) as f64);
        let mut buf = Vec::new();
        write_slice(&f, 1, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y,value\n0,0,4.0\n1,0,5.0\n0,1,6.0\n1,1,7.0\n"
        );
    }

    #[test]
    fn length_mismatch() {
        let text = "nx,ny,nz\n2,1,1\n1.0\n";
        assert!(read_field::<f64, _>(text.as_bytes()).is_err());
        assert!(read_field::<f64, _>("x\n".as_bytes()).is_err());
    }
}
