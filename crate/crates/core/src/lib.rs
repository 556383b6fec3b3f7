//! Multi-agent requirements engineering.
//!
//! Five agents (stakeholders, collector, modeler, checker, documenter) turn a
//! rough idea of a system into a requirements model and a software
//! requirements specification. Agents never talk to each other directly: every
//! intermediate artifact is published to an append-only [`Workspace`] and the
//! [`orchestrator`] decides which action runs next from what was published.
//!
//! Generation goes through the [`Backend`] trait. The crate ships a live
//! chat-completions client, a scripted backend answering from a recorded
//! [`Transcript`], and a recording wrapper, so whole pipeline runs can be
//! replayed offline and byte-for-byte.
//!
//! ```
//! use mare_core::{fixtures, orchestrator::{run_pipeline, PipelineConfig}, RunStatus};
//!
//! let case = fixtures::load_case("ATM").unwrap();
//! let backend = case.happy_backend().unwrap();
//! let config = PipelineConfig::for_fixture(case.metamodel());
//! let outcome = run_pipeline(&case.rough_idea, &config, &backend).unwrap();
//! assert_eq!(outcome.status, RunStatus::Success);
//! ```

pub mod actions;
pub mod agents;
pub mod backend;
pub mod cli;
pub mod evaluation;
pub mod fixtures;
pub mod metamodels;
pub mod orchestrator;
pub mod workspace;

mod fsutil;

pub use actions::{ActionCatalog, ActionKind, ActionSpec, CheckVerdict, Slot};
pub use agents::{Recipient, Role, RoleCatalog, RoleDefinition};
pub use backend::{Backend, BackendError, GenerationParams, GenerationRequest, Transcript};
pub use evaluation::{CaseMetrics, EvalReport, GoldCase, Prf};
pub use metamodels::{Metamodel, MetamodelKind, RequirementsModel};
pub use orchestrator::{run_pipeline, PipelineConfig, RunOutcome, RunStatus};
pub use workspace::{ArtifactEnvelope, ArtifactFilter, EnvelopeDraft, Workspace};
