//! Hybrid-OLAP data-warehouse engine for precision-agriculture constellation
//! schemas: ETL with measurable quality criteria, columnar base/delta
//! storage, cuboid-lattice pre-aggregation and a roll-up/drill-down/slice/
//! dice/pivot query engine.

pub mod coerce;
pub mod cube;
pub mod datagen;
pub mod engine;
pub mod etl;
pub mod olap;
mod keymap;
pub mod predicate;
pub mod schema;
pub mod storage;
pub mod value;

pub use value::Value;
