pub mod dqn;
pub mod net;
pub mod replay;
pub mod tabular;

pub use dqn::{
    double_dqn_target, epsilon_after, greedy_rollout, select_action, td_loss, train,
    EpisodeMetrics, NullObserver, StepObserver, TrainOutput,
};
pub use net::{argmax, Gradients, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::QTable;
