use std::io::Cursor;

use subrosa::io::{
    export_csv_to, import_csv_from, read_field, read_field_from, read_flow_from, write_field, write_field_to,
    write_flow_to, FieldData,
};
use subrosa::{FlowMap, Grid, ScalarField, VectorField};

fn sample_grid() -> Grid {
    Grid::new(&[4, 6, 5], &[1.0, 2.0, 0.5]).unwrap()
}

#[test]
fn field_round_trip_is_bit_exact() {
    let g = sample_grid();
    let f = ScalarField::from_fn(g, |p| (p[0] * 7.1).sin() / 3.0 + p[2]).unwrap();
    let data = FieldData::scalar(&f);
    let mut buf = Vec::new();
    write_field_to(&mut buf, &data).unwrap();
    let back = read_field_from(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.into_scalar().unwrap().values(), f.values());
}

#[test]
fn vector_field_round_trip_through_file() {
    let g = sample_grid();
    let v = VectorField::from_fn(g, |p| [p[0], -p[1], 1e-300 * p[2]]).unwrap();
    let dir = std::env::temp_dir().join(format!("subrosa-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("v.srfld");
    write_field(&path, &FieldData::vector(&v)).unwrap();
    let back = read_field(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back.components, v.components());
}

#[test]
fn flow_round_trip() {
    let g = sample_grid();
    let disp = (0..g.len()).map(|i| [0.01 * i as f64, -0.02, 0.0]).collect();
    let logj = (0..g.len()).map(|i| 1e-3 * i as f64).collect();
    let flow = FlowMap::from_displacements(g, disp, logj, 1.0).unwrap();
    let mut buf = Vec::new();
    write_flow_to(&mut buf, &flow).unwrap();
    let back = read_flow_from(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(back.displacements(), flow.displacements());
    assert_eq!(back.log_jacobian(), flow.log_jacobian());
    assert_eq!(back.positions(), flow.positions());
}

#[test]
fn corrupt_input_is_rejected() {
    let g = sample_grid();
    let mut buf = Vec::new();
    write_field_to(&mut buf, &FieldData::scalar(&ScalarField::zeros(g))).unwrap();
    let mut bad = buf.clone();
    bad[0] ^= 0xff;
    assert!(read_field_from(&mut Cursor::new(&bad)).is_err());
    buf.truncate(buf.len() - 3);
    assert!(read_field_from(&mut Cursor::new(&buf)).is_err());
}

#[test]
fn csv_lists_coordinates_then_values() {
    let g = Grid::new(&[4, 4], &[1.0, 1.0]).unwrap();
    let f = ScalarField::from_fn(g, |p| p[0] + 10.0 * p[1]).unwrap();
    let data = FieldData::scalar(&f);
    let mut buf = Vec::new();
    export_csv_to(&mut buf, &data, &["u"]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with(",u"), "{header}");
    assert_eq!(lines.count(), 16);
    let back = import_csv_from(Cursor::new(buf), g).unwrap();
    assert_eq!(back.components, data.components);
}
