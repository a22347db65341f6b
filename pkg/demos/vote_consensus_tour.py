"""Small tour of the crowd-label pipeline: per-clip consensus, the
precedence rule for multi-label clips, chance-corrected agreement, and
annotator accuracy against a golden set."""
from talkover.labels import (VOTE_LABELS, VoteRecord, aggregate_all,
                             annotator_accuracy, fleiss_kappa,
                             precedence_resolve, votes_to_table)

# Three clips, seven annotators each. clip_a is a clean majority, clip_b
# sits exactly on the 70 percent bar, clip_c splits down the middle.
BALLOTS = {
    "clip_a": ["laughter"] * 5 + ["other"] * 2,
    "clip_b": ["backchannel"] * 5 + ["laughter", "other"],
    "clip_c": ["failed_interruption"] * 3 + ["backchannel"] * 3 + ["other"],
}

def main():
    votes = [VoteRecord(cid, "ann_%d" % i, lab)
             for cid, labs in BALLOTS.items()
             for i, lab in enumerate(labs)]

    print("consensus at the default 0.7 bar:")
    for res in aggregate_all(votes):
        verdict = res.label if res.accepted else "rejected"
        print("  %-8s %-20s agreement %d/%d"
              % (res.clip_id, verdict,
                 round(res.agreement_fraction * res.vote_count), res.vote_count))

    # When one clip genuinely contains several phenomena the rarest one
    # wins, so a failed interruption is never drowned out by laughter.
    mixed = ["laughter", "backchannel", "failed_interruption"]
    print("\nprecedence over %s -> %r" % (mixed, precedence_resolve(mixed)))

    table, _ = votes_to_table(votes, categories=VOTE_LABELS)
    print("\nagreement beyond chance: kappa = %.3f" % fleiss_kappa(table))

    golden = {"clip_a": "laughter", "clip_b": "backchannel"}
    print("\nper-annotator accuracy on the %d golden clips:" % len(golden))
    for ann, stats in annotator_accuracy(votes, golden).items():
        print("  %-6s %d/%d = %.2f"
              % (ann, stats["correct"], stats["total"], stats["accuracy"]))

if __name__ == "__main__":
    main()
