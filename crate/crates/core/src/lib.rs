//! Request-boundary inference-mode routing.
//!
//! Requests are described by cheap static features, routed to one serving
//! mode (FP16, INT8, GPTQ 4-bit, speculative decoding, prefix caching and
//! their hybrids) by a rule controller, a constraint-aware oracle or a
//! learned classifier, and replayed against a profile table of per-mode
//! speedup, energy, memory and quality ratios.

pub mod classifier;
pub mod domain;
pub mod error;
pub mod learned;
pub mod profile;
pub mod report;
pub mod routing;
pub mod sim;
pub mod workload;

pub use classifier::{classify, extract_features, resolve_family, ClassifierConfig, FeatureVector};
pub use domain::{
    EvalMode, InferenceMode, RequestDescriptor, RequestMetrics, WorkloadClass, WorkloadFamily,
};
pub use error::{Error, Result};
pub use profile::{BaselineCostModel, ModeProfileCell, ProfileTable, Provenance};
pub use routing::{
    route_oracle, route_rule, route_static, ConstraintSet, DecisionReason, OraclePolicy,
    RoutingDecision, RoutingPolicy, RulePolicy, StaticPolicy,
};
pub use sim::{
    compare_policies, run_policy, simulate_request, simulate_trace, Comparison, PolicyReport,
    SimOptions, SimRequestResult,
};
