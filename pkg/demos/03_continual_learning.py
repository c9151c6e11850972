"""Continual learning with elastic weight consolidation (EWC).

Train on task A, then on task B — once with the Fisher-weighted quadratic
penalty anchoring the parameters to the task-A optimum, and once without.
Without the penalty the model catastrophically forgets task A.
"""
import numpy as np

from qclab import (
    Dataset,
    EwcConfig,
    TrainConfig,
    build_fully_connected,
    continual_train,
    evaluate,
    fisher_information,
    init_params,
    train,
)

rng = np.random.default_rng(2)


def make_task(n_per_class, axis):
    """Class = which half of the image is slightly brighter."""
    raws, classes = [], []
    for cls in (0, 1):
        for _ in range(n_per_class):
            img = rng.uniform(0.3, 0.5, (8, 8))
            half = slice(0, 4) if cls == 0 else slice(4, 8)
            if axis == 0:
                img[half, :] += 0.08
            else:
                img[:, half] += 0.08
            raws.append(img.reshape(-1))
            classes.append(cls)
    order = rng.permutation(len(raws))
    return Dataset.from_raw(np.array(raws)[order], np.array(classes)[order], f"halves{axis}")


task_a_train, task_a_test = make_task(80, 0), make_task(20, 0)  # top vs bottom
task_b_train, task_b_test = make_task(80, 1), make_task(20, 1)  # left vs right

model = build_fully_connected(n_qubits=6, depth=4)
report_a = train(model, init_params(model, 7), task_a_train,
                 TrainConfig(learning_rate=0.01, batch_size=20, epochs=20, seed=7))
print(f"task A accuracy after task A: {evaluate(model, report_a.theta, task_a_test)[0]:.3f}")

# Fisher importance of each parameter for task A, measured at the task-A optimum.
fisher = fisher_information(model, report_a.theta, task_a_train)
config_b = TrainConfig(learning_rate=0.01, batch_size=20, epochs=20, seed=8)

print("\nafter training on task B:")
for lam in (0.0, 200.0):
    rep = continual_train(model, report_a.theta, task_b_train, fisher,
                          config_b, EwcConfig(lambda_ewc=lam))
    acc_a = evaluate(model, rep.theta, task_a_test)[0]
    acc_b = evaluate(model, rep.theta, task_b_test)[0]
    label = "no penalty  " if lam == 0 else f"lambda = {lam:g}"
    print(f"  {label}: task A {acc_a:.3f}, task B {acc_b:.3f}, "
          f"average {(acc_a + acc_b) / 2:.3f}")
