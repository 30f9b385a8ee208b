//! Label-driven multi-teacher distillation at the global server.
//!
//! Each regional model is a teacher. The server pool is bucketed by every
//! teacher's own predictions, and teacher `r`'s KL term on bucket `c` is
//! scaled by `β[r][c]`, a softmax over teachers of their one-vs-rest AUC for
//! class `c`. An optional update term keeps the new global model close to
//! the previous one where the previous one was more reliable, and a small
//! hard cross-entropy term anchors the student to the pool labels.

mod align;
mod config;
mod distill;
mod loss;
mod reliability;

pub use align::{align_samples, alignment_audit, AlignedPool, AlignmentAudit};
pub use config::{lambda_schedule, DistillConfig, Epsilon, LambdaSpec};
pub use distill::{distill, distill_with_trace, DistillOutcome};
pub use loss::{joint_loss, surrogate_prob, teacher_loss, update_loss, JointLossParts};
pub use reliability::{auc_ovr, class_aucs, class_reliability, old_model_reliability, ReliabilityMatrix};
