"""Independent brute-force scorers used to cross-check the metrics module.

Deliberately written with naive scans and double loops, sharing no code
with the package: these are the reference the fast path must agree with.
"""


def oracle_chunks_strict(labels):
    """Chunks of a well-formed BIO sequence via lookahead scanning."""
    chunks = []
    n = len(labels)
    i = 0
    while i < n:
        if labels[i].startswith("B-"):
            slot_type = labels[i][2:]
            j = i + 1
            while j < n and labels[j] == "I-" + slot_type:
                j += 1
            chunks.append((slot_type, i, j))
            i = j
        else:
            i += 1
    return chunks


def oracle_chunks_lenient(labels):
    """Like strict, but an orphan I-x starts a chunk as if it were B-x."""
    chunks = []
    n = len(labels)
    i = 0
    while i < n:
        label = labels[i]
        if label == "O":
            i += 1
            continue
        slot_type = label[2:]
        j = i + 1
        while j < n and labels[j] == "I-" + slot_type:
            j += 1
        chunks.append((slot_type, i, j))
        i = j
    return chunks


def oracle_intent_accuracy(records):
    correct = 0
    for record in records:
        if record.intent == record.gold_intent:
            correct += 1
    return correct / len(records)


def oracle_slot_prf(records):
    tp = 0
    n_pred = 0
    n_gold = 0
    for record in records:
        pred = oracle_chunks_lenient(record.labels)
        gold = oracle_chunks_strict(record.gold_labels)
        used = [False] * len(gold)
        for p in pred:
            for gi, g in enumerate(gold):
                if not used[gi] and p == g:
                    used[gi] = True
                    tp += 1
                    break
        n_pred += len(pred)
        n_gold += len(gold)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _same_chunk_set(a, b):
    for x in a:
        found = False
        for y in b:
            if x == y:
                found = True
                break
        if not found:
            return False
    for y in b:
        found = False
        for x in a:
            if x == y:
                found = True
                break
        if not found:
            return False
    return True


def oracle_overall_accuracy(records):
    correct = 0
    for record in records:
        if record.intent != record.gold_intent:
            continue
        pred = oracle_chunks_lenient(record.labels)
        gold = oracle_chunks_strict(record.gold_labels)
        if _same_chunk_set(pred, gold):
            correct += 1
    return correct / len(records)
