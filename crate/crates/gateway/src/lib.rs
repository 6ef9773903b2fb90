//! Network and command-line surface for the virtual-barrier simulator.
//!
//! [`server`] exposes a running [`session::Session`] over WebSocket at `/ws`;
//! [`cli`] implements the `vbarrier` binary (`run`, `serve`, `validate`).

pub mod cli;
pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{Command, CommandMessage, ErrorCode, ResponseMessage, ServerMessage, StateMessage};
pub use server::{ServeError, Server};
pub use session::Session;
