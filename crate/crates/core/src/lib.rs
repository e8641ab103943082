//! Grounded QDMR to SPARQL compilation: QDMR parsing and validation, the
//! relational-to-RDF encoding, the translator, an embedded SPARQL engine,
//! a reference interpreter, and execution-accuracy matching.

pub mod execmatch;
pub mod joinpath;
pub mod linker;
pub mod qdmr;
pub mod rdf;
pub mod refeval;
pub mod result;
pub mod schema;
pub mod sparql;
pub mod suite;
pub mod testgen;
pub mod transpile;
pub mod value;

pub use execmatch::{equivalent, limit1_contained, match_sorted, standardize, MatchVerdict, MisuseError};
pub use joinpath::{join_path, JoinPath, NoJoinPath};
pub use linker::{match_values, tokenize, ValueCandidate};
pub use qdmr::{GroundedQdmr, Grounding, Op, OpKind, QdmrError, Step, StepIndex};
pub use rdf::{to_rdf, RdfGraph, Triple};
pub use refeval::{refeval, RefEvalError};
pub use result::{Provenance, ResultTable};
pub use schema::{ColumnRef, Schema, SchemaError, TableData};
pub use sparql::{evaluate, parse_sparql, SparqlError, SparqlQuery};
pub use transpile::{transpile, TranspileError};
pub use value::{Comparator, Datatype, Term, Value};
