# %% [markdown]
# # The copy solution and its loss floor
#
# Under teacher forcing, position i sees y_{i-1}.  A model that simply repeats
# its input emits a blank first, then y_1 ... y_{n-1}, and must split the last
# prediction between y_{n-1} and y_n.  Its best alignment costs 2 ln 2 in
# total, or 2 ln 2 / n per token, without having learned to translate.

# %%
import math

from latalign.toy import analysis
from latalign.toy.decode import greedy_decode
from latalign.toy.model import copy_model
from latalign.toy.tasks import default_task, gen_dataset, make_vocab
from latalign.toy.train import Objective, example_loss

task = default_task()
splits = gen_dataset(task)
model = copy_model(task)
vocab = make_vocab(task.vocab_size)

ex = splits.train[0]
out = example_loss(model, ex.source, ex.target, Objective.AXE, want_grad=False)
n = len(ex.target)
print("target ", vocab.decode(ex.target))
print("path   ", out.path)
print(f"loss {out.loss:.5f}  floor 2ln2/n = {2 * math.log(2) / n:.5f}")

# %% [markdown]
# Every example lands on the same pattern.

# %%
paths = [example_loss(model, e.source, e.target, Objective.AXE, want_grad=False).path for e in splits.train]
print(analysis.pattern_rates(paths))

# %% [markdown]
# At inference time the model's own first output is the blank, which it then
# copies forever.

# %%
print(vocab.decode(greedy_decode(model, ex.source)))
