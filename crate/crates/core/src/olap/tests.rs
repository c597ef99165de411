use chrono::NaiveDate;
use proptest::prelude::*;

use super::*;
use crate::cube::{build_cube, plan_lattice, CubeIndex, CubePolicy};
use crate::predicate::{CompareOp, Filter};
use crate::schema::{builtin_schema, ConstellationSchema, Level};
use crate::storage::{DimensionRow, FactRow, Partition, Snapshot, Store};
use crate::Value;

fn keyed(store: &Store, dim: &str, id: i64, attrs: &[(&str, Value)]) -> DimensionRow {
    let def = store.schema().dimension(dim).unwrap();
    let mut v = vec![Value::Null; def.attributes.len()];
    v[def.key_index()] = Value::Int(id);
    for (name, val) in attrs {
        v[def.attribute_index(name).unwrap()] = val.clone();
    }
    DimensionRow(v)
}

const CROPS: [&str; 3] = ["wheat", "barley", "maize"];

/// Six crops over three names, four fields in two blocks, three farmers.
fn dimensions(s: &mut Store) {
    let crops: Vec<_> = (1..=6)
        .map(|i| {
            keyed(s, "Crop", i, &[
                ("name", Value::text(CROPS[(i % 3) as usize])),
                ("variety_name", Value::text(format!("v{}", i % 4))),
            ])
        })
        .collect();
    s.insert_dimension_rows("Crop", &crops).unwrap();
    let fields: Vec<_> = (1..=4)
        .map(|i| {
            keyed(s, "Field", i, &[
                ("name", Value::text(format!("f{i}"))),
                ("block", Value::text(if i < 3 { "A" } else { "B" })),
                ("area", Value::Dec(4.0 * i as f64)),
            ])
        })
        .collect();
    s.insert_dimension_rows("Field", &fields).unwrap();
    let farmers: Vec<_> = (1..=3)
        .map(|i| keyed(s, "Farmer", i, &[("birth_year", Value::Int(1960 + 10 * i))]))
        .collect();
    s.insert_dimension_rows("Farmer", &farmers).unwrap();
}

type YieldRow = (i64, i64, i64, f64, f64);

fn yield_store(rows: &[YieldRow], split: usize) -> Store {
    let mut s = Store::new(builtin_schema()).unwrap();
    dimensions(&mut s);
    let facts: Vec<_> = rows
        .iter()
        .map(|&(c, f, fa, q, a)| FactRow {
            keys: vec![c, f, fa],
            measures: vec![q, a],
        })
        .collect();
    s.insert_fact_rows("Yield", &facts[..split], Partition::Base).unwrap();
    s.insert_fact_rows("Yield", &facts[split..], Partition::Delta).unwrap();
    s
}

fn sample_rows() -> Vec<YieldRow> {
    let mut out = Vec::new();
    for c in 0..=6 {
        for f in 1..=4 {
            for fa in 1..=3 {
                if (c * 7 + f * 3 + fa) % 4 != 0 {
                    let area = if (c + f) % 5 == 0 { 0.0 } else { fa as f64 * 1.5 };
                    out.push((c, f, fa, (c * f) as f64 * 0.7 + 0.1, area));
                }
            }
        }
    }
    out
}

fn trading_store() -> Store {
    let mut s = Store::new(builtin_schema()).unwrap();
    let products: Vec<_> = (1..=6)
        .map(|i| {
            keyed(&s, "Product", i, &[
                ("product_name", Value::text(format!("p{i}"))),
                ("group_name", Value::text(if i <= 3 { "fertiliser" } else { "seed" })),
                ("type_name", Value::text("input")),
            ])
        })
        .collect();
    s.insert_dimension_rows("Product", &products).unwrap();
    let orders: Vec<_> = (1..=8)
        .map(|i| {
            let d = NaiveDate::from_ymd_opt(2019 + (i as i32 % 3), 1 + (i as u32 % 12), 10).unwrap();
            keyed(&s, "Order", i, &[("order_date", Value::Date(d))])
        })
        .collect();
    s.insert_dimension_rows("Order", &orders).unwrap();
    for dim in ["Supplier", "Purchaser"] {
        let rows: Vec<_> = (1..=2).map(|i| keyed(&s, dim, i, &[])).collect();
        s.insert_dimension_rows(dim, &rows).unwrap();
    }
    let facts: Vec<_> = (1..=6)
        .flat_map(|p| (1..=8).map(move |o| (p, o)))
        .filter(|(p, o)| (p + o) % 3 != 0)
        .map(|(p, o)| FactRow {
            keys: vec![p, o, 1 + p % 2, 1 + o % 2],
            measures: vec![p as f64, (p * o) as f64 * 2.5],
        })
        .collect();
    s.insert_fact_rows("Trading", &facts, Partition::Base).unwrap();
    s
}

fn schema() -> ConstellationSchema {
    builtin_schema()
}

fn cube_for(snap: &Snapshot, fact: &str, policy: CubePolicy) -> CubeIndex {
    build_cube(snap, &plan_lattice(snap, fact, policy).unwrap(), false).unwrap()
}

fn close(a: &Option<Value>, b: &Option<Value>) -> bool {
    match (a, b) {
        (Some(Value::Dec(x)), Some(Value::Dec(y))) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => a == b,
    }
}

fn assert_same_answer(a: &ResultGrid, b: &ResultGrid) {
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.cols, b.cols);
    assert_eq!(a.measures, b.measures);
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!((x.r, x.c), (y.r, y.c));
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!(close(u, v), "{u:?} vs {v:?} at ({}, {})", x.r, x.c);
        }
    }
}

fn q(text: &str) -> Query {
    compile_query(&schema(), text).unwrap()
}

#[test]
fn compiles_grammar_examples() {
    let a = q("from Yield group by Crop.name measure sum(quantity_t)");
    assert_eq!(a.fact, "Yield");
    assert_eq!(a.group_by, vec![GroupBy::attr("Crop", "name")]);
    assert_eq!(a.measures, vec!["quantity_t"]);

    match compile_query(&schema(), "from Yield group by Ghost.x") {
        Err(OlapError::Semantic { name, .. }) => assert_eq!(name, "Ghost"),
        other => panic!("expected semantic error, got {other:?}"),
    }

    let c = q(r#"from Trading group by Order.year(order_date) where Product.group_name = "fertiliser" measure sum(total_value_eur)"#);
    assert_eq!(c.group_by, vec![GroupBy::new("Order", Level::Year("order_date".into()))]);
    assert_eq!(c.filters, vec![Filter::eq("Product", "group_name", "fertiliser")]);
}

#[test]
fn parse_errors_carry_position() {
    match compile_query(&schema(), "from Yield\n  group Crop.name measure row_count") {
        Err(OlapError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 9)),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(
        compile_query(&schema(), "from Yield measure sum(row_count)"),
        Err(OlapError::Semantic { .. })
    ));
    assert!(matches!(compile_query(&schema(), "from Yield measure bogus"), Err(OlapError::Semantic { .. })));
    assert!(matches!(compile_query(&schema(), "from Yield group by Product.type_name measure row_count"), Err(OlapError::Semantic { .. })));
}

#[test]
fn literals_conform_to_level_kind() {
    let a = q("from Yield where Field.area > 10 measure row_count");
    assert_eq!(a.filters[0].values, vec![Value::Dec(10.0)]);
    let b = q("from Trading where Order.order_date >= 2020-03-01 and Order.month(order_date) in (\"2020-03\", \"2021-01\") measure row_count");
    assert_eq!(b.filters[0].values, vec![Value::Date(NaiveDate::from_ymd_opt(2020, 3, 1).unwrap())]);
    assert_eq!(b.filters[1].values.len(), 2);
}

#[test]
fn apex_identity() {
    let mut s = yield_store(&sample_rows(), sample_rows().len());
    let snap = s.snapshot();
    let cube = cube_for(&snap, "Yield", CubePolicy::Full);
    let query = q("from Yield measure quantity_t, area_ha, row_count");
    let g = execute(&snap, Some(&cube), &query, ExecOptions::default()).unwrap();
    assert_eq!(g.cells.len(), 1);
    assert_eq!(g.provenance.cuboid.as_deref(), Some("Yield.apex"));
    let apex = cube.apex();
    assert_eq!(g.cells[0].values[0], Some(Value::Dec(apex.sums(0)[0])));
    assert_eq!(g.cells[0].values[1], Some(Value::Dec(apex.sums(1)[0])));
    assert_eq!(g.cells[0].values[2], Some(Value::Int(apex.counts()[0] as i64)));
    assert_eq!(apex.counts()[0] as usize, sample_rows().len());
}

#[test]
fn empty_store_gives_one_zero_cell() {
    let mut s = yield_store(&[], 0);
    let snap = s.snapshot();
    let query = q("from Yield measure quantity_t, row_count, yield_t_per_ha");
    let g = execute(&snap, None, &query, ExecOptions::default()).unwrap();
    assert_eq!(g, ResultGrid { provenance: g.provenance.clone(), ..oracle_execute(&snap, &query).unwrap() });
    assert_eq!(g.cells[0].values, vec![Some(Value::Dec(0.0)), Some(Value::Int(0)), None]);
    let grouped = q("from Yield group by Crop.name measure row_count");
    assert!(execute(&snap, None, &grouped, ExecOptions::default()).unwrap().is_empty());
    assert!(oracle_execute(&snap, &grouped).unwrap().is_empty());
}

#[test]
fn slice_to_missing_member_is_empty() {
    let mut s = yield_store(&sample_rows(), 40);
    let snap = s.snapshot();
    let cube = cube_for(&snap, "Yield", CubePolicy::Full);
    let base = q("from Yield group by Crop.name measure quantity_t");
    let sliced = slice(&schema(), &base, "Crop", Level::attr("name"), Value::text("durian")).unwrap();
    assert!(execute(&snap, Some(&cube), &sliced, ExecOptions::default()).unwrap().is_empty());

    // two different values on one attribute contradict each other
    let both = slice(&schema(), &slice(&schema(), &base, "Crop", Level::attr("name"), Value::text("wheat")).unwrap(), "Crop", Level::attr("name"), Value::text("maize")).unwrap();
    assert!(execute(&snap, Some(&cube), &both, ExecOptions::default()).unwrap().is_empty());

    // a vacuous slice keeps the grid
    let all = slice(&schema(), &base, "Field", Level::attr("block"), Value::text("A")).unwrap();
    let all = dice(&schema(), &all, &[]).unwrap();
    let vacuous = dice(&schema(), &base, &[Filter::new("Field", Level::attr("area"), CompareOp::Ge, Value::Int(0))]).unwrap();
    assert_eq!(vacuous.filters[0].values, vec![Value::Dec(0.0)]);
    let a = execute(&snap, Some(&cube), &base, ExecOptions::default()).unwrap();
    let b = execute(&snap, Some(&cube), &vacuous, ExecOptions::default()).unwrap();
    assert_same_answer(&a, &b);
    assert_eq!(all.filters.len(), 1);
}

#[test]
fn slice_and_dice_match_oracle() {
    let mut s = yield_store(&sample_rows(), 30);
    let snap = s.snapshot();
    let cube = cube_for(&snap, "Yield", CubePolicy::Full);
    let base = q("from Yield group by Field.block, Farmer.farmer_id measure quantity_t, yield_t_per_ha, row_count");
    let sliced = slice(&schema(), &base, "Crop", Level::attr("name"), Value::text("wheat")).unwrap();
    let diced = dice(&schema(), &base, &[
        Filter::new("Field", Level::attr("area"), CompareOp::Gt, Value::Int(10)),
        Filter::eq("Crop", "name", "wheat"),
    ])
    .unwrap();
    for query in [&sliced, &diced] {
        let oracle = oracle_execute(&snap, query).unwrap();
        assert!(!oracle.is_empty());
        for opts in [ExecOptions { force_scan: true }, ExecOptions::default()] {
            assert_same_answer(&execute(&snap, Some(&cube), query, opts).unwrap(), &oracle);
        }
    }
    let folded = [Filter::eq("Crop", "name", "wheat"), Filter::eq("Field", "block", "B")]
        .iter()
        .try_fold(base.clone(), |acc, f| slice(&schema(), &acc, &f.dimension, f.level.clone(), f.values[0].clone()))
        .unwrap();
    assert_eq!(folded, dice(&schema(), &base, &[Filter::eq("Crop", "name", "wheat"), Filter::eq("Field", "block", "B")]).unwrap());
    assert!(matches!(
        slice(&schema(), &base, "Crop", Level::attr("name"), Value::Int(3)),
        Err(OlapError::Semantic { .. })
    ));
    assert!(matches!(
        slice(&schema(), &base, "Product", Level::attr("product_name"), Value::text("x")),
        Err(OlapError::Semantic { .. })
    ));
}

#[test]
fn slice_commutes_with_grouping() {
    let mut s = yield_store(&sample_rows(), 50);
    let snap = s.snapshot();
    let base = q("from Yield group by Crop.name, Field.block measure quantity_t, row_count");
    let full = execute(&snap, None, &base, ExecOptions::default()).unwrap();
    let sliced = execute(&snap, None, &slice(&schema(), &base, "Crop", Level::attr("name"), Value::text("barley")).unwrap(), ExecOptions::default()).unwrap();
    let expect: Vec<_> = full.entries().into_iter().filter(|(k, _)| k[0] == Value::text("barley")).collect();
    assert_eq!(sliced.entries().into_iter().collect::<Vec<_>>(), expect);
}

#[test]
fn zero_denominator_ratio_is_absent() {
    let mut s = yield_store(&[(1, 1, 1, 5.0, 0.0), (2, 1, 1, 3.0, 2.0)], 2);
    let snap = s.snapshot();
    let g = execute(&snap, None, &q("from Yield group by Crop.crop_id measure yield_t_per_ha"), ExecOptions::default()).unwrap();
    assert_eq!(g.cells[0].values, vec![None]);
    assert_eq!(g.cells[1].values, vec![Some(Value::Dec(1.5))]);
    let json = g.to_json();
    assert!(json.contains(r#""values":{"yield_t_per_ha":null}"#), "{json}");
}

#[test]
fn provenance_is_truthful() {
    let rows = sample_rows();
    let mut s = yield_store(&rows, 40);
    let snap = s.snapshot();
    let cube = cube_for(&snap, "Yield", CubePolicy::Full);
    let query = q(r#"from Yield group by Crop.name where Field.block = "A" measure quantity_t"#);
    let g = execute(&snap, Some(&cube), &query, ExecOptions::default()).unwrap();
    assert_eq!(g.provenance.source, Source::Cuboid);
    let id = g.provenance.cuboid.clone().unwrap();
    let used = cube.cuboids().iter().find(|c| c.id().to_string() == id).unwrap();
    assert_eq!(g.provenance.base_rows_covered, used.len());
    assert_eq!(g.provenance.delta_rows_scanned, rows.len() - 40);

    let forced = execute(&snap, Some(&cube), &query, ExecOptions { force_scan: true }).unwrap();
    assert_eq!(forced.provenance.source, Source::Scan);
    assert_eq!(forced.provenance.base_rows_covered, 40);
    assert_same_answer(&g, &forced);

    // a stale cube is ignored
    s.merge_delta("Yield").unwrap();
    let fresh = s.snapshot();
    let after = execute(&fresh, Some(&cube), &query, ExecOptions::default()).unwrap();
    assert_eq!(after.provenance.source, Source::Scan);
    assert_eq!(after.provenance.delta_rows_scanned, 0);
    assert_same_answer(&after, &g);
}

#[test]
fn pivot_is_an_involution() {
    let mut s = trading_store();
    let snap = s.snapshot();
    let g = execute(&snap, None, &q("from Trading group by Product.group_name, Order.year(order_date) measure total_value_eur pivot rows=Product.group_name cols=Order.year(order_date)"), ExecOptions::default()).unwrap();
    assert_eq!(g.rows.len(), 2);
    assert_eq!(g.cols.len(), 3);
    let (r, c) = (g.row_axes.clone(), g.col_axes.clone());
    let swapped = pivot(&g, &c, &r).unwrap();
    assert_eq!(swapped.rows, g.cols);
    assert_eq!(swapped.cols, g.rows);
    let mut before: Vec<_> = g.cells.iter().map(|c| format!("{:?}", c.values)).collect();
    let mut after: Vec<_> = swapped.cells.iter().map(|c| format!("{:?}", c.values)).collect();
    before.sort();
    after.sort();
    assert_eq!(before, after);
    assert_eq!(pivot(&swapped, &r, &c).unwrap(), g);
    assert!(matches!(pivot(&g, &r, &[]), Err(OlapError::AxisMismatch(_))));

    let one = execute(&snap, None, &q("from Trading group by Product.group_name measure row_count"), ExecOptions::default()).unwrap();
    let t = pivot(&one, &[], &one.row_axes).unwrap();
    assert_eq!(t.rows, vec![Vec::<Value>::new()]);
    assert_eq!(t.cols, one.rows);
    assert_eq!(t.cells.len(), one.cells.len());
}

#[test]
fn roll_up_steps_along_the_drill_path() {
    let sc = schema();
    let a = q("from Trading group by Product.product_name measure row_count");
    let b = roll_up(&sc, &a, "Product").unwrap();
    assert_eq!(b.group_by, vec![GroupBy::attr("Product", "group_name")]);
    let c = roll_up(&sc, &b, "Product").unwrap();
    assert_eq!(c.group_by, vec![GroupBy::attr("Product", "type_name")]);
    assert!(roll_up(&sc, &c, "Product").unwrap().group_by.is_empty());
    let crop = q("from Yield group by Crop.name where Crop.name = \"wheat\" measure row_count");
    let up = roll_up(&sc, &crop, "Crop").unwrap();
    assert!(up.group_by.is_empty());
    assert_eq!(up.filters, crop.filters);
    assert!(matches!(roll_up(&sc, &crop, "Field"), Err(OlapError::NotGrouped(_))));
    let key = q("from Yield group by Farmer.farmer_id measure row_count");
    assert!(roll_up(&sc, &key, "Farmer").unwrap().group_by.is_empty());
    let off = q("from Yield group by Field.area measure row_count");
    assert!(roll_up(&sc, &off, "Field").unwrap().group_by.is_empty());
}

#[test]
fn drill_down_steps_finer() {
    let sc = schema();
    let a = q("from Trading group by Product.group_name measure row_count");
    assert_eq!(drill_down(&sc, &a, "Product").unwrap().group_by, vec![GroupBy::attr("Product", "product_name")]);
    let order = q("from Trading group by Order.order_id measure row_count");
    assert!(matches!(drill_down(&sc, &order, "Order"), Err(OlapError::AlreadyFinest(_))));
    let month = q("from Trading group by Order.year(order_date) measure row_count");
    assert_eq!(drill_down(&sc, &month, "Order").unwrap().group_by, vec![GroupBy::new("Order", Level::Month("order_date".into()))]);
    let off = q("from Yield group by Field.area measure row_count");
    assert_eq!(drill_down(&sc, &off, "Field").unwrap().group_by, vec![GroupBy::attr("Field", "field_id")]);
    // an absent dimension enters at its coarsest level, in fact order
    let none = q("from Yield group by Crop.name, Farmer.farmer_id measure row_count pivot rows=Farmer.farmer_id cols=Crop.name");
    let added = drill_down(&sc, &none, "Field").unwrap();
    assert_eq!(added.group_by[1], GroupBy::attr("Field", "block"));
    assert_eq!(added.pivot.as_ref().unwrap().rows, vec![GroupBy::attr("Field", "block"), GroupBy::attr("Farmer", "farmer_id")]);
    assert!(validate_query(&sc, &added).is_ok());
    assert!(matches!(drill_down(&sc, &none, "Product"), Err(OlapError::Semantic { .. })));
}

#[test]
fn drill_down_undoes_roll_up() {
    let mut s = trading_store();
    let snap = s.snapshot();
    let sc = schema();
    let cases = [
        ("from Trading group by Product.product_name, Order.month(order_date) measure total_value_eur, unit_price_eur", "Product"),
        ("from Trading group by Product.product_id, Order.year(order_date) measure row_count", "Product"),
        ("from Trading group by Product.type_name, Order.year(order_date) measure row_count", "Product"),
        ("from Trading group by Product.group_name, Order.order_date measure quantity_t pivot rows=Product.group_name cols=Order.order_date", "Order"),
        ("from Trading group by Product.group_name, Supplier.supplier_id measure quantity_t pivot rows=Product.group_name, Supplier.supplier_id cols=", "Supplier"),
    ];
    for (text, dim) in cases {
        let original = q(text);
        let back = drill_down(&sc, &roll_up(&sc, &original, dim).unwrap(), dim).unwrap();
        assert_eq!(back, original, "{text}");
        let a = execute(&snap, None, &original, ExecOptions::default()).unwrap();
        let b = execute(&snap, None, &back, ExecOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn roll_up_consistency() {
    let mut s = trading_store();
    let snap = s.snapshot();
    let sc = schema();
    let fine = q("from Trading group by Product.product_name, Order.year(order_date) measure quantity_t, total_value_eur, row_count");
    let coarse = roll_up(&sc, &fine, "Product").unwrap();
    let f = execute(&snap, None, &fine, ExecOptions::default()).unwrap();
    let c = execute(&snap, None, &coarse, ExecOptions::default()).unwrap();
    // oracle: re-aggregate the fine grid by looking up each product's group
    let products = snap.dimension("Product").unwrap();
    let mut expect: std::collections::BTreeMap<Vec<Value>, (f64, f64, i64)> = Default::default();
    for (k, v) in f.entries() {
        let row = (0..products.len())
            .find(|&r| products.level_value(r, &Level::attr("product_name")).unwrap() == k[0])
            .unwrap();
        let group = products.level_value(row, &Level::attr("group_name")).unwrap();
        let e = expect.entry(vec![group, k[1].clone()]).or_default();
        e.0 += v[0].as_ref().unwrap().as_f64().unwrap();
        e.1 += v[1].as_ref().unwrap().as_f64().unwrap();
        e.2 += v[2].as_ref().unwrap().as_i64().unwrap();
    }
    let got: std::collections::BTreeMap<_, _> = c
        .entries()
        .into_iter()
        .map(|(k, v)| (k, (v[0].as_ref().unwrap().as_f64().unwrap(), v[1].as_ref().unwrap().as_f64().unwrap(), v[2].as_ref().unwrap().as_i64().unwrap())))
        .collect();
    assert_eq!(got.len(), expect.len());
    for (k, (q1, t1, n1)) in &expect {
        let (q2, t2, n2) = got[k];
        assert!((q1 - q2).abs() <= 1e-9 * q1.abs() && (t1 - t2).abs() <= 1e-9 * t1.abs());
        assert_eq!(*n1, n2);
    }
}

#[test]
fn trading_cuboid_path_with_date_levels() {
    let mut s = trading_store();
    let snap = s.snapshot();
    let cube = cube_for(&snap, "Trading", CubePolicy::Full);
    let query = q(r#"from Trading group by Order.year(order_date) where Product.group_name = "fertiliser" and Order.order_date >= 2020-01-01 measure total_value_eur, unit_price_eur"#);
    let g = execute(&snap, Some(&cube), &query, ExecOptions::default()).unwrap();
    assert_eq!(g.provenance.source, Source::Cuboid);
    assert_same_answer(&g, &oracle_execute(&snap, &query).unwrap());
}

#[test]
fn grid_json_shape() {
    let mut s = yield_store(&sample_rows(), 10);
    let snap = s.snapshot();
    let g = execute(&snap, None, &q("from Yield group by Field.block measure row_count, quantity_t"), ExecOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    assert_eq!(v["rows"], serde_json::json!([["A"], ["B"]]));
    assert_eq!(v["cols"], serde_json::json!([[]]));
    assert_eq!(v["cells"][0]["r"], 0);
    assert!(v["cells"][0]["values"]["row_count"].is_i64());
    assert_eq!(v["provenance"]["source"], "scan");
    assert_eq!(v["provenance"]["delta_rows_scanned"], sample_rows().len() - 10);
}

fn arb_level(dim: &'static str) -> BoxedStrategy<Level> {
    let names: &'static [&'static str] = match dim {
        "Crop" => &["crop_id", "variety_name", "name"],
        "Field" => &["field_id", "name", "block", "area"],
        _ => &["farmer_id", "birth_year"],
    };
    prop::sample::select(names).prop_map(Level::attr).boxed()
}

fn arb_filter() -> impl Strategy<Value = Filter> {
    prop_oneof![
        prop::sample::select(&CROPS[..]).prop_map(|n| Filter::eq("Crop", "name", n)),
        (0..4i64).prop_map(|k| Filter::new("Crop", Level::attr("crop_id"), CompareOp::Le, Value::Int(k))),
        (0..20i64).prop_map(|a| Filter::new("Field", Level::attr("area"), CompareOp::Gt, Value::Dec(a as f64))),
        Just(Filter::new("Field", Level::attr("block"), CompareOp::Ne, Value::text("A"))),
        prop::collection::vec(1960..2000i64, 1..3).prop_map(|ys| Filter {
            dimension: "Farmer".into(),
            level: Level::attr("birth_year"),
            op: CompareOp::In,
            values: ys.into_iter().map(Value::Int).collect(),
        }),
    ]
}

fn arb_query() -> impl Strategy<Value = Query> {
    const DIMS: [&str; 3] = ["Crop", "Field", "Farmer"];
    (
        prop::sample::subsequence(&DIMS[..], 0..=3),
        (arb_level("Crop"), arb_level("Field"), arb_level("Farmer")),
        prop::collection::vec(arb_filter(), 0..3),
        prop::sample::subsequence(&["quantity_t", "area_ha", "row_count", "yield_t_per_ha"][..], 1..=4),
    )
        .prop_map(|(ds, (c, f, fa), filters, measures)| Query {
            fact: "Yield".into(),
            group_by: ds
                .iter()
                .map(|d| GroupBy::new(*d, match *d {
                    "Crop" => c.clone(),
                    "Field" => f.clone(),
                    _ => fa.clone(),
                }))
                .collect(),
            filters,
            measures: measures.iter().map(|m| m.to_string()).collect(),
            pivot: None,
        })
}

fn arb_rows() -> impl Strategy<Value = Vec<YieldRow>> {
    prop::collection::vec((0..=6i64, 1..=4i64, 1..=3i64, 0.0..100.0f64, prop_oneof![Just(0.0), 0.5..5.0f64]), 0..60).prop_map(|rows| {
        let mut seen = std::collections::HashSet::new();
        rows.into_iter().filter(|r| seen.insert((r.0, r.1, r.2))).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn execute_matches_oracle(rows in arb_rows(), cut in 0.0..=1.0f64, queries in prop::collection::vec(arb_query(), 1..6)) {
        let split = (rows.len() as f64 * cut) as usize;
        let mut s = yield_store(&rows, split);
        let snap = s.snapshot();
        let cubes = [None, Some(cube_for(&snap, "Yield", CubePolicy::Full)), Some(cube_for(&snap, "Yield", CubePolicy::Cap(3)))];
        for query in &queries {
            let oracle = oracle_execute(&snap, query).unwrap();
            for cube in &cubes {
                let got = execute(&snap, cube.as_ref(), query, ExecOptions::default()).unwrap();
                assert_same_answer(&got, &oracle);
            }
        }
    }

    #[test]
    fn display_round_trips(query in arb_query(), pivot_cut in 0usize..4) {
        let mut query = query;
        let cut = pivot_cut.min(query.group_by.len());
        if pivot_cut > 0 {
            query.pivot = Some(PivotSpec { rows: query.group_by[..cut].to_vec(), cols: query.group_by[cut..].to_vec() });
        }
        let text = query.to_string();
        prop_assert_eq!(compile_query(&schema(), &text).unwrap(), query, "{}", text);
    }
}
