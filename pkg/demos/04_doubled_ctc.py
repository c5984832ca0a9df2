# %% [markdown]
# # Doubling the predictions under sum aggregation
#
# Sum aggregation with one prediction per target token is cross entropy.
# Feeding every decoder input twice gives 2n predictions, so the lattice
# again admits a shifted alignment: the first copy of y_{i-1} can emit it
# again and the second copy can emit y_i.  On a task where each source token
# picks one of four outputs at random, no honest model gets below ln 4 per
# content token, but the doubled run does.

# %%
import math

import numpy as np

from latalign.toy.decode import greedy_decode, hypothesis
from latalign.toy.tasks import ambiguous_task, gen_dataset
from latalign.toy.train import Objective, TrainConfig, evaluate, train

task = ambiguous_task(n_train=500)
splits = gen_dataset(task)
floor = np.mean([(len(e.target) - 1) / len(e.target) * math.log(4) for e in splits.train])
print(f"best possible per-token loss for a translating model ~ {floor:.3f}")

# %%
for objective in (Objective.CE, Objective.CTC_DOUBLED):
    res = train(TrainConfig(objective=objective, epochs=10), task)
    loss = evaluate(res.model, splits.train, objective, decode_outputs=False).loss
    empty = np.mean([not hypothesis(greedy_decode(res.model, e.source))[0] for e in splits.test])
    print(f"{objective.value:12s} train loss {loss:.3f}  empty outputs {empty:.2f}")
