//! Legacy ASCII VTK output of triangle meshes with scalar fields.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::mesh::Mesh;

const VTK_TRIANGLE: u8 = 5;

/// A named scalar field with one value per vertex or per triangle.
#[derive(Debug, Clone, Copy)]
pub struct ScalarField<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub fn write_unstructured_grid(
    out: &mut impl Write,
    mesh: &Mesh,
    title: &str,
    point_data: &[ScalarField<'_>],
    cell_data: &[ScalarField<'_>],
) -> io::Result<()> {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    for f in point_data {
        if f.values.len() != nv {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!(
                    "point field `{}` has {} values for {nv} vertices",
                    f.name,
                    f.values.len()
                ),
            ));
        }
    }
    for f in cell_data {
        if f.values.len() != nt {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!(
                    "cell field `{}` has {} values for {nt} triangles",
                    f.name,
                    f.values.len()
                ),
            ));
        }
    }
    // The title line must be a single line of at most 256 characters.
    let title: String = title
        .lines()
        .next()
        .unwrap_or("")
        .chars()
        .take(255)
        .collect();

    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(out, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "{VTK_TRIANGLE}")?;
    }
    write_section(out, "POINT_DATA", nv, point_data)?;
    write_section(out, "CELL_DATA", nt, cell_data)?;
    Ok(())
}

fn write_section(
    out: &mut impl Write,
    header: &str,
    n: usize,
    fields: &[ScalarField<'_>],
) -> io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "{header} {n}")?;
    for f in fields {
        writeln!(
            out,
            "SCALARS {} double 1",
            f.name.replace(char::is_whitespace, "_")
        )?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in f.values {
            writeln!(out, "{v:e}")?;
        }
    }
    Ok(())
}

pub fn write_unstructured_grid_file(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    title: &str,
    point_data: &[ScalarField<'_>],
    cell_data: &[ScalarField<'_>],
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_unstructured_grid(&mut w, mesh, title, point_data, cell_data)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle_layout() {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            None,
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_unstructured_grid(
            &mut buf,
            &mesh,
            "test",
            &[ScalarField {
                name: "c",
                values: &[1.0, 2.0, 3.0],
            }],
            &[ScalarField {
                name: "speed",
                values: &[0.5],
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(text.contains("CELLS 1 4\n3 0 1 2\n"));
        assert!(text.contains("CELL_TYPES 1\n5\n"));
        assert!(text
            .contains("POINT_DATA 3\nSCALARS c double 1\nLOOKUP_TABLE default\n1e0\n2e0\n3e0\n"));
        assert!(text.contains("CELL_DATA 1\nSCALARS speed double 1"));
    }

    #[test]
    fn field_length_is_checked() {
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            None,
            1.0,
        )
        .unwrap();
        let err = write_unstructured_grid(
            &mut Vec::new(),
            &mesh,
            "x",
            &[ScalarField {
                name: "c",
                values: &[1.0],
            }],
            &[],
        );
        assert!(err.is_err());
    }
}
