# pylint: disable:invalid-name
"""
This file contains constant definitions.
"""


# ACTIVATIONS

#:
RELU = 'relu'

#:
TANH = 'tanh'

#:
GELU = 'gelu'

#:
IDENTITY = 'identity'

#:
SIGMOID = 'sigmoid'

#: Supported hidden-layer activations
ACTIVATIONS = [RELU, TANH, GELU]

#: Supported output-layer activations
FINAL_ACTIVATIONS = [IDENTITY, SIGMOID, TANH]

#: Hidden activation of critic networks
CRITIC_ACTIVATION = RELU

#: Hidden activation of the discriminator
DISCRIMINATOR_ACTIVATION = RELU

#: Hidden activation of the flow velocity field
VELOCITY_ACTIVATION = GELU

#: Hidden activation of the one-step policy
POLICY_ACTIVATION = RELU

#: Output activation of the one-step policy (bounded actions)
POLICY_FINAL_ACTIVATION = TANH


# NETWORK NAMES

#:
VELOCITY = 'velocity'

#:
POLICY = 'policy'

#:
CRITIC = 'critic'

#:
TARGET = 'target'

#:
DISCRIMINATOR = 'discriminator'

#: Learned components, in the order of one training step
COMPONENTS = [CRITIC, VELOCITY, DISCRIMINATOR, POLICY]

#: Config section key of the flow policy
FLOW = 'flow'

#: Keys of the per-component config sections
CONFIG_COMPONENTS = [CRITIC, FLOW, DISCRIMINATOR, POLICY]


# TRAINING MODES

#: Confounding-robust flow Q-learning
MODE_CFQL = 'cfql'

#: Plain flow Q-learning (factual weight pinned to 1)
MODE_FQL = 'fql'

#: Behavior cloning of the flow policy only
MODE_BC = 'bc'

#:
MODES = [MODE_CFQL, MODE_FQL, MODE_BC]

#: Online phase: plain FQL objective on the mixed buffer
ONLINE_FQL = 'fql'

#: Online phase: half offline batch with CFQL, half online batch with FQL
ONLINE_BALANCED = 'balanced'

#:
ONLINE_OBJECTIVES = [ONLINE_FQL, ONLINE_BALANCED]

#: Worst-case surrogate: minimum over ensemble members
WORST_CASE_ENSEMBLE = 'ensemble'

#: Worst-case surrogate: minimum of the ensemble mean over the batch
WORST_CASE_BATCH = 'batch'

#:
WORST_CASE_MODES = [WORST_CASE_ENSEMBLE, WORST_CASE_BATCH]

#: Lower-bound direction of the causal Bellman operator
DIRECTION_LOWER = 'lower'

#: Upper-bound direction of the causal Bellman operator
DIRECTION_UPPER = 'upper'

#:
DIRECTIONS = [DIRECTION_LOWER, DIRECTION_UPPER]


# DATASET

#:
OBSERVATION = 'obs'

#:
ACTION = 'action'

#:
REWARD = 'reward'

#:
NEXT_OBSERVATION = 'next_obs'

#:
DONE = 'done'

#:
EPISODE = 'episode'

#: Dataset table columns, in record order
DATASET_FIELDS = [OBSERVATION, ACTION, REWARD, NEXT_OBSERVATION, DONE,
                  EPISODE]

#:
ENV_ID = 'env_id'

#:
SEED = 'seed'

#:
OBS_DIM = 'obs_dim'

#:
ACTION_DIM = 'action_dim'

#:
REWARD_BOUNDS = 'reward_bounds'

#:
N_RECORDS = 'n_records'

#:
N_STATES = 'n_states'

#:
N_ACTIONS = 'n_actions'

#: Bootstrap targets are masked at done=1
TERMINAL_BOOTSTRAP_MASKED = 'terminal_bootstrap_masked'

#:
FORMAT_VERSION = 'format_version'


# BINARY CONTAINER

#: Magic bytes of tensor containers
CONTAINER_MAGIC = b'CFQL'


# METRICS

#:
STEP = 'step'

#:
PHASE = 'phase'

#: Phase of gradient steps on the offline dataset
PHASE_OFFLINE = 'offline'

#: Phase of gradient steps during fine-tuning
PHASE_ONLINE = 'online'

#: Phase of evaluation rows
PHASE_EVAL = 'eval'

#:
PHASES = [PHASE_OFFLINE, PHASE_ONLINE, PHASE_EVAL]

#:
CRITIC_LOSS = 'critic_loss'

#:
FLOW_LOSS = 'flow_loss'

#:
DISCRIMINATOR_LOSS = 'discriminator_loss'

#:
DISCRIMINATOR_ACCURACY = 'discriminator_accuracy'

#: Mean discriminator output on BC flow actions
DISCRIMINATOR_FLOW_MEAN = 'discriminator_flow_mean'

#: Mean discriminator output on one-step policy actions
DISCRIMINATOR_POLICY_MEAN = 'discriminator_policy_mean'

#:
POLICY_LOSS = 'policy_loss'

#:
DISTILL_LOSS = 'distill_loss'

#:
ROBUST_Q = 'robust_q'

#:
SUCCESS_RATE = 'success_rate'

#:
MEAN_RETURN = 'mean_return'

#:
RETURN_SE = 'return_se'

#:
SUCCESS_SE = 'success_se'


# BOUND REPORTS

#:
STATE = 'state'

#:
ANALYTIC = 'analytic'

#:
ESTIMATE = 'estimate'

#:
STANDARD_ERROR = 'standard_error'

#:
DEVIATION = 'deviation'


# SWEEPS

#: Sweep axis over the discriminator loss coefficient
AXIS_DISC_COEF = 'disc_coef'

#: Sweep axis over the critic ensemble size
AXIS_ENSEMBLES = 'ensembles'

#:
SWEEP_AXES = {
    AXIS_DISC_COEF: [1.0, 5.0, 10.0, 15.0],
    AXIS_ENSEMBLES: [2, 4, 6],
}

#:
AXIS = 'axis'

#:
VALUE = 'value'

#:
MEAN_SUCCESS = 'mean_success'

#:
UNSTABLE = 'unstable'

#: Compared training objective
MODE = 'mode'

#: Fine-tuning objective of a comparison row
OBJECTIVE = 'objective'

#:
OFFLINE_SUCCESS = 'offline_success'

#:
ONLINE_SUCCESS = 'online_success'


# CONFOUNDING WITNESS

#: Arms of the discretized confounded bandit
WITNESS_ARMS = (-0.8, 0.8)

#:
ARM = 'arm'

#: Ensemble-mean critic value of an arm
Q_MEAN = 'q_mean'

#: Probability that the behavior flow plays an arm
FACTUAL_WEIGHT = 'factual_weight'

#: Interventional value of a policy
TRUE_VALUE = 'true_value'


# RUN DIRECTORY

#:
CONFIG_FILE = 'config.json'

#:
MANIFEST_FILE = 'manifest.json'

#:
METRICS_FILE = 'metrics.csv'

#:
RESULT_FILE = 'result.json'

#:
CHECKPOINT_DIR = 'checkpoints'

#: Generated dataset inside a run directory
DATASET_FILE = 'dataset.bin'

#: Final checkpoint inside the checkpoint directory
FINAL_CHECKPOINT = 'final.cfql'


# ENVIRONMENTS

#:
CONFOUNDED_BANDIT = 'confounded-bandit-v0'

#:
TWO_GOAL_REACHER = 'two-goal-reacher-v0'

#:
TABULAR_CHAIN = 'tabular-confounded-chain-v0'
