# %% [markdown]
# # Best alignments on two hand-made instances
#
# A model that predicts "it is so rainy today" is scored against the target
# "it is rainy today".  Cross entropy pairs position 3 ("so") with "rainy" and
# everything after it goes wrong.  Max aggregation over monotonic alignments
# skips the stray prediction with a delimiter and lets the last prediction
# cover both "today" and the end token.

# %%
from pathlib import Path

from latalign import DpConfig, OperatorSet, cross_entropy, latent_loss, path_to_alignment
from latalign.cli import align_table
from latalign.instances import rainy_day_instance, thank_you_instance
from latalign.oracle import count_paths

rainy = rainy_day_instance()
res = latent_loss(rainy.target.ids, rainy.logprobs.values, DpConfig.axe())
print(align_table(rainy, res.best_path, topk=4))
print("alignment", path_to_alignment(res.best_path).as_tuple())
print(f"max-aggregated loss {res.neg_log_loss:.3f} vs cross entropy {cross_entropy(rainy.target.ids, rainy.logprobs.values):.3f}")

# %% [markdown]
# The second instance holds predictions of a model that learned to copy its
# input: a blank first, then each previous target token, with the last
# prediction shared by "." and the end token.  The best alignment is the
# shifted diagonal.

# %%
thanks = thank_you_instance()
res = latent_loss(thanks.target.ids, thanks.logprobs.values, DpConfig.axe())
print(align_table(thanks, res.best_path, topk=4))

# %% [markdown]
# How many monotonic paths does each operator set admit on a square lattice?
# With one prediction per target token the sum-aggregated set collapses to
# the single diagonal, which is why it reduces to cross entropy.

# %%
for n in range(1, 7):
    counts = {
        "ctc": count_paths(n, n, OperatorSet.ctc()),
        "axe": count_paths(n, n, OperatorSet.axe()),
        "axe-causal": count_paths(n, n, OperatorSet.axe(causal=True)),
    }
    print(n, counts)

# %%
out = Path(__file__).resolve().parent / "data"
rainy.save(out / "rainy_day.json")
thanks.save(out / "thank_you.json")
print("wrote", sorted(p.name for p in out.glob("*.json")))
