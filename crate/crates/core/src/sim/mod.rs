//! Multi-device synchronization in virtual time.
//!
//! Device 0 is the leader and the time reference. A session runs min-filter
//! offset exchanges between the leader and every other device, records a short
//! preview from each camera, fits a phase model per device in the leader's
//! clock domain, plans per-device frame extensions that bring all phases onto
//! the leader's, applies them, and measures how far corresponding video
//! frames are apart.

mod device;
mod network;
mod session;

pub use device::{
    apply_alignment, plan_alignment, AlignmentPlan, Capture, FrameExtension, SimCamera, SimDevice,
    PLAN_PERIOD_TOLERANCE,
};
pub use network::{mean_offset, min_filter_offset, Network, NetworkModel, OffsetSample};
pub use session::{run_session, PairSkew, SessionConfig, SyncReport};
