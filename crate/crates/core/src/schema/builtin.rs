use super::{
    AttributeDef, AttributeKind, ConstellationSchema, DimensionDef, FactDef, HierarchyDef, Level,
    LinkDef, MeasureDef,
};

use AttributeKind::{Date, Decimal, Identifier, Integer, Text};

struct DimBuilder(DimensionDef);

impl DimBuilder {
    fn new(name: &str, key: &str) -> Self {
        Self(DimensionDef {
            name: name.into(),
            key: key.into(),
            attributes: vec![AttributeDef::new(key, Identifier, false)],
            links: Vec::new(),
            hierarchies: Vec::new(),
        })
    }

    fn attrs(mut self, attrs: &[(&str, AttributeKind)]) -> Self {
        self.0.attributes.extend(
            attrs
                .iter()
                .map(|(name, kind)| AttributeDef::new(*name, *kind, true)),
        );
        self
    }

    fn link(mut self, attribute: &str, target: &str) -> Self {
        self.0.links.push(LinkDef {
            attribute: attribute.into(),
            target: target.into(),
        });
        self
    }

    fn hierarchy(mut self, name: &str, levels: Vec<Level>) -> Self {
        self.0.hierarchies.push(HierarchyDef {
            name: name.into(),
            levels,
        });
        self
    }

    fn build(self) -> DimensionDef {
        self.0
    }
}

fn levels(names: &[&str]) -> Vec<Level> {
    names.iter().map(|n| Level::attr(*n)).collect()
}

fn contact_dimension(name: &str, key: &str) -> DimensionDef {
    DimBuilder::new(name, key)
        .attrs(&[
            ("name", Text),
            ("address", Text),
            ("contact_person", Text),
            ("contact_phone", Text),
            ("contact_mobile", Text),
            ("contact_email", Text),
        ])
        .build()
}

/// The precision-agriculture constellation: four fact tables sharing
/// nineteen dimension tables.
pub fn builtin_schema() -> ConstellationSchema {
    let mut s = ConstellationSchema::new("precision_agriculture");

    let dims = vec![
        DimBuilder::new("Business", "business_id")
            .attrs(&[
                ("business_name", Text),
                ("original_name", Text),
                ("address", Text),
                ("contact_phone", Text),
                ("contact_mobile", Text),
                ("contact_email", Text),
            ])
            .build(),
        DimBuilder::new("Crop", "crop_id")
            .attrs(&[
                ("name", Text),
                ("code", Text),
                ("variety_name", Text),
                ("variety_description", Text),
                ("standard_moisture_percentage", Decimal),
                ("estimated_yield", Decimal),
            ])
            .hierarchy("variety", levels(&["variety_name", "name"]))
            .build(),
        DimBuilder::new("Disease", "disease_id")
            .attrs(&[
                ("name", Text),
                ("type", Text),
                ("features_on_crop", Text),
                ("description", Text),
                ("measure", Text),
            ])
            .hierarchy("disease_type", levels(&["name", "type"]))
            .build(),
        DimBuilder::new("Drilling", "drilling_id")
            .attrs(&[
                ("method", Text),
                ("machine", Text),
                ("description", Text),
                ("date", Date),
            ])
            .build(),
        DimBuilder::new("Farmer", "farmer_id")
            .attrs(&[
                ("name", Text),
                ("sex", Text),
                ("birth_year", Integer),
                ("address", Text),
                ("field_area", Decimal),
                ("phone", Text),
                ("email", Text),
                ("experiences", Text),
                ("skills", Text),
            ])
            .build(),
        DimBuilder::new("Field", "field_id")
            .attrs(&[
                ("station_id", Identifier),
                ("farmer_id", Identifier),
                ("name", Text),
                ("block", Text),
                ("area", Decimal),
                ("working_area", Decimal),
            ])
            .link("farmer_id", "Farmer")
            .link("station_id", "Weather_Station")
            .hierarchy("location", levels(&["name", "block"]))
            .build(),
        DimBuilder::new("Fertiliser", "fertilizer_id")
            .attrs(&[
                ("fertiliser_nutrient", Text),
                ("product_name", Text),
                ("application_area", Decimal),
                ("quantity", Decimal),
                ("stock_date", Date),
            ])
            .build(),
        DimBuilder::new("Inspection", "inspection_id")
            .attrs(&[
                ("description", Text),
                ("problem_type", Text),
                ("severity", Text),
                ("date", Date),
                ("growth_stage", Text),
            ])
            .build(),
        DimBuilder::new("Maintenance", "maintenance_id")
            .attrs(&[("rate", Decimal), ("description", Text), ("date", Date)])
            .build(),
        DimBuilder::new("Order", "order_id")
            .attrs(&[
                ("order_date", Date),
                ("transaction_date", Date),
                ("value", Decimal),
                ("comment", Text),
                ("reference", Text),
            ])
            .hierarchy(
                "calendar",
                vec![
                    Level::attr("order_date"),
                    Level::Month("order_date".into()),
                    Level::Year("order_date".into()),
                ],
            )
            .build(),
        DimBuilder::new("Pest", "pest_id")
            .attrs(&[
                ("common_name", Text),
                ("scientific_name", Text),
                ("type", Text),
                ("description", Text),
                ("density", Decimal),
                ("coverage", Decimal),
            ])
            .hierarchy("pest_type", levels(&["common_name", "type"]))
            .build(),
        DimBuilder::new("Planning", "planning_id")
            .attrs(&[
                ("name", Text),
                ("plan_number", Text),
                ("product_name", Text),
                ("product_rate", Decimal),
                ("date", Date),
                ("water_volume", Decimal),
                ("notes", Text),
            ])
            .build(),
        DimBuilder::new("Plow", "plow_id")
            .attrs(&[
                ("tillage_method", Text),
                ("plowing_depth", Decimal),
                ("machine", Text),
                ("date", Date),
            ])
            .build(),
        DimBuilder::new("Product", "product_id")
            .attrs(&[
                ("product_name", Text),
                ("group_name", Text),
                ("type_name", Text),
                ("date_of_manufacture", Date),
                ("business_id", Identifier),
            ])
            .link("business_id", "Business")
            .hierarchy(
                "catalogue",
                levels(&["product_name", "group_name", "type_name"]),
            )
            .build(),
        contact_dimension("Purchaser", "purchaser_id"),
        DimBuilder::new("Soil", "soil_id")
            .attrs(&[
                ("field_id", Identifier),
                ("mineral_particles", Text),
                ("organic_matter", Decimal),
                ("colour", Text),
                ("ph_value", Decimal),
            ])
            .link("field_id", "Field")
            .build(),
        contact_dimension("Supplier", "supplier_id"),
        DimBuilder::new("Water_Utilization", "water_utili_id")
            .attrs(&[
                ("amount", Decimal),
                ("source", Text),
                ("method", Text),
                ("date", Date),
            ])
            .build(),
        DimBuilder::new("Weather_Station", "station_id")
            .attrs(&[
                ("station_name", Text),
                ("station_batch", Text),
                ("measure_date", Date),
                ("air_temperature", Decimal),
                ("soil_temperature", Decimal),
            ])
            .build(),
    ];
    for d in dims {
        s.add_dimension(d);
    }

    let fact = |name: &str, dims: &[&str], measures: Vec<MeasureDef>| FactDef {
        name: name.into(),
        dimensions: dims.iter().map(|d| d.to_string()).collect(),
        measures,
    };

    s.add_fact(fact(
        "Trading",
        &["Product", "Order", "Supplier", "Purchaser"],
        vec![
            MeasureDef::additive("quantity_t", "t"),
            MeasureDef::additive("total_value_eur", "EUR"),
            MeasureDef::count("row_count"),
            MeasureDef::ratio("unit_price_eur", "total_value_eur", "quantity_t", "EUR/t"),
        ],
    ));
    s.add_fact(fact(
        "Operation",
        &[
            "Product",
            "Crop",
            "Field",
            "Farmer",
            "Soil",
            "Fertiliser",
            "Plow",
            "Drilling",
            "Water_Utilization",
            "Inspection",
        ],
        vec![
            MeasureDef::additive("cost_eur", "EUR"),
            MeasureDef::additive("quantity_applied", "units"),
            MeasureDef::count("row_count"),
        ],
    ));
    s.add_fact(fact(
        "Treatment",
        &[
            "Planning",
            "Disease",
            "Product",
            "Crop",
            "Field",
            "Farmer",
            "Maintenance",
            "Pest",
        ],
        vec![
            MeasureDef::additive("dose_amount", "units"),
            MeasureDef::additive("cost_eur", "EUR"),
            MeasureDef::count("row_count"),
        ],
    ));
    s.add_fact(fact(
        "Yield",
        &["Crop", "Field", "Farmer"],
        vec![
            MeasureDef::additive("quantity_t", "t"),
            MeasureDef::additive("area_ha", "ha"),
            MeasureDef::count("row_count"),
            MeasureDef::ratio("yield_t_per_ha", "quantity_t", "area_ha", "t/ha"),
        ],
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_published_schema() {
        let s = builtin_schema();
        assert_eq!(s.facts.len(), 4);
        assert_eq!(s.dimensions.len(), 19);
        assert_eq!(s.facts["Operation"].dimensions.len(), 10);
        assert_eq!(s.facts["Treatment"].dimensions.len(), 8);
        assert_eq!(s.facts["Trading"].dimensions.len(), 4);
        assert_eq!(s.facts["Yield"].dimensions.len(), 3);
    }

    #[test]
    fn crop_attributes() {
        let s = builtin_schema();
        let crop = &s.dimensions["Crop"];
        for a in ["crop_id", "name", "code", "variety_name"] {
            assert!(crop.attribute(a).is_some(), "missing {a}");
        }
    }

    #[test]
    fn shared_dimensions() {
        let s = builtin_schema();
        for d in ["Crop", "Farmer", "Field"] {
            assert_eq!(s.facts_using(d), ["Operation", "Treatment", "Yield"]);
        }
        assert_eq!(s.facts_using("Product"), ["Operation", "Trading", "Treatment"]);
    }

    #[test]
    fn every_dimension_key_is_named_after_its_table() {
        // two keys keep the published spelling
        let s = builtin_schema();
        for d in s.dimensions.values() {
            let stem = d.key.trim_end_matches("_id");
            let table = d.name.to_lowercase();
            assert!(
                table.starts_with(&stem[..4.min(stem.len())])
                    || d.name == "Weather_Station"
                    || d.name == "Fertiliser",
                "{} keyed by {}",
                d.name,
                d.key
            );
        }
    }
}
