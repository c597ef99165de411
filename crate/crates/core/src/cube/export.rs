//! Canonical CSV serialization of cuboids: one file per cuboid, rows in
//! lexicographic order of their group values.

use std::path::{Path, PathBuf};

use crate::schema::MeasureKind;

use super::{export_columns, CubeError, CubeIndex, Cuboid, CuboidId};

/// `<fact>.<group>.cuboid.csv`, e.g. `Yield.Crop+Field.cuboid.csv`.
pub fn export_file_name(id: &CuboidId) -> String {
    format!("{id}.cuboid.csv")
}

/// Canonical bytes of one cuboid.
pub fn canonical_csv(cube: &CubeIndex, cuboid: &Cuboid) -> Vec<u8> {
    let schema = cube.schema();
    let def = &schema.facts[&cuboid.id().fact];
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(export_columns(schema, cuboid.id())).expect("in-memory write");
    for e in 0..cuboid.len() {
        let mut rec: Vec<String> = cuboid.group_values(e).iter().map(|v| v.render()).collect();
        let mut stored = 0;
        for m in &def.measures {
            match m.kind {
                MeasureKind::Count => rec.push(cuboid.counts()[e].to_string()),
                MeasureKind::Additive => {
                    rec.push(cuboid.sums(stored)[e].to_string());
                    stored += 1;
                }
                MeasureKind::Ratio { .. } => {}
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes every cuboid of `cube` into `dir`; returns the paths in plan order.
pub fn export_cube(cube: &CubeIndex, dir: &Path) -> Result<Vec<PathBuf>, CubeError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CubeError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut out = Vec::with_capacity(cube.cuboids().len());
    for c in cube.cuboids() {
        let path = dir.join(export_file_name(c.id()));
        std::fs::write(&path, canonical_csv(cube, c)).map_err(io(&path))?;
        out.push(path);
    }
    Ok(out)
}
