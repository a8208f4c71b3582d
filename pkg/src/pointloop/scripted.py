"""Built-in deterministic rules for the scripted backend.

These recognize the pipeline's own prompts and answer with plausible,
fully deterministic text derived from the request content, so the whole
system can run offline (tests, demos, crash-recovery drills). Content is a
pure function of the request: identical requests always get identical
responses.
"""

from __future__ import annotations

import hashlib
import random

from . import prompts
from .backends import ChatRequest, ChatResponse, ScriptedBackend, hash_embed_rule

__all__ = ["demo_rule", "make_scripted_backend", "RULES"]

_COLORS = ("red", "blue", "green", "yellow", "white", "black", "orange", "purple")
_NOUNS = ("chair", "table", "lamp", "vase", "robot", "car", "house", "tree",
          "boat", "mug", "shelf", "drone")
_SYNONYMS = {
    "chair": ["seat", "stool", "armchair", "bench"],
    "table": ["desk", "counter", "workbench"],
    "lamp": ["light", "lantern", "fixture"],
    "vase": ["urn", "pot", "vessel"],
    "robot": ["android", "automaton", "machine"],
    "car": ["automobile", "vehicle", "sedan"],
    "house": ["home", "building", "cottage"],
    "tree": ["plant", "sapling", "conifer"],
    "boat": ["ship", "vessel", "dinghy"],
    "mug": ["cup", "tumbler", "beaker"],
    "shelf": ["rack", "ledge", "bookcase"],
    "drone": ["quadcopter", "uav", "copter"],
}


def _pick(seed_text: str, options):
    digest = hashlib.sha256(seed_text.encode("utf-8")).digest()
    return options[digest[0] % len(options)]


def _object_phrase(key: str) -> tuple[str, str]:
    return _pick("color:" + key, _COLORS), _pick("noun:" + key, _NOUNS)


def _annotation_caption(object_id: str) -> str:
    color, noun = _object_phrase(object_id)
    return (
        f"The 3D model shows a {color} {noun} with a smooth rounded body. "
        f"A small cube sits behind the main structure, slightly above its base. "
        f"The overall geometric form is compact with moderate depth."
    )


def _refined_caption(caption: str) -> str:
    # Visual details change; the spatial sentence survives verbatim.
    return caption.replace("smooth rounded body", "polished angular body")


def _first_sentence(text: str) -> str:
    head = text.split(".", 1)[0].strip()
    return head + "." if head else text


def demo_rule(fingerprint: str, req: ChatRequest) -> ChatResponse | None:
    """Answer any of the pipeline's own prompts deterministically."""
    text = req.messages[-1].text

    if text == prompts.POINT_ANNOTATION_PROMPT and req.point_payload:
        return ChatResponse(text=_annotation_caption(req.point_payload))

    refinement_head = prompts.VIEW_REFINEMENT_PROMPT_TEMPLATE.split("{caption}")[0]
    if text.startswith(refinement_head):
        return ChatResponse(text=_refined_caption(text[len(refinement_head):]))

    if text.startswith(prompts.VIEW_CAPTION_PROMPT):
        key = hashlib.sha256(b"".join(req.images or [b""])).hexdigest()
        color, noun = _object_phrase(key)
        return ChatResponse(text=f"Rendered views show a {color} {noun} against a plain background.")

    for itype, template in prompts.INSTRUCTION_SYNTHESIS_TEMPLATES.items():
        head = template.split("{caption}")[0]
        if text.startswith(head):
            caption = text[len(head):]
            return _synthesis_response(itype, caption)

    rephrase_head = prompts.BENCH_REPHRASE_TEMPLATE.split("{caption}")[0]
    if text.startswith(rephrase_head):
        caption = text[len(rephrase_head):]
        return ChatResponse(text=_aspect_sections(caption))

    synonym_head = prompts.SYNONYM_PROMPT_TEMPLATE.split("{caption}")[0]
    if text.startswith(synonym_head):
        caption = text[len(synonym_head):]
        noun = next((n for n in _NOUNS if n in caption), "chair")
        return ChatResponse(text=", ".join([noun] + _SYNONYMS[noun][:3]))

    if text.startswith(prompts.TEMPLATE_PROMPT):
        tail = text.split("\n")[-1].strip() or "object"
        noun = next((n for n in _NOUNS if n in tail), None)
        if noun:
            return ChatResponse(text=tail.replace(noun, "{}", 1))
        return ChatResponse(text="a {} with fine details")

    # Both judge prompts share their opening sentence; key on distinctive body text.
    if "referring to the same general class" in text:
        return _cls_judgement(text)

    if "evaluate these two answers from six aspects" in text:
        return _caption_scores(fingerprint)

    if text == prompts.CAPTION_EVAL_PROMPT and req.point_payload:
        return ChatResponse(text=_annotation_caption(req.point_payload))
    if text == prompts.INSTRUCTION_CLS_PROMPT and req.point_payload:
        color, noun = _object_phrase(req.point_payload)
        return ChatResponse(text=f"This is a 3D model of a {color} {noun}.")
    if text == prompts.COMPLETION_CLS_PROMPT and req.point_payload:
        _, noun = _object_phrase(req.point_payload)
        return ChatResponse(text=f"{noun}.")

    return None


def _synthesis_response(itype: str, caption: str) -> ChatResponse:
    head = _first_sentence(caption)
    if itype == "brief":
        return ChatResponse(text=head)
    if itype == "detailed":
        return ChatResponse(text=caption.strip())
    if itype == "single_round":
        return ChatResponse(text=f"Q: What does the model depict?\nA: {head}")
    turns = (
        f"Q: What does the model depict?\nA: {head}\n"
        f"Q: What sits behind the main structure?\nA: A small cube sits behind it, above the base."
    )
    return ChatResponse(text=turns)


def _aspect_sections(caption: str) -> str:
    color, noun = None, None
    for c in _COLORS:
        if c in caption:
            color = c
            break
    for n in _NOUNS:
        if n in caption:
            noun = n
            break
    color = color or "gray"
    noun = noun or "object"
    return "\n".join([
        f'"description": "A {color} {noun} rendered as a compact 3D form."',
        f'"color": "The body is mostly {color}."',
        f'"shape": "The {noun} has a rounded silhouette with an angular base."',
        '"count": "There is one main object with one smaller cube."',
        '"spatial": "A small cube sits behind the main structure, above its base."',
        f'"usage": "Useful as a game or visualization asset depicting a {noun}."',
    ])


def _cls_judgement(prompt_text: str) -> ChatResponse:
    # Lexical overlap between the label list and the model answer.
    tail = prompt_text.rsplit("Input: 1. ", 1)[-1]
    labels_part, _, model_part = tail.partition(" 2. ")
    label_words = {w.strip(" .,").lower() for w in labels_part.replace(",", " ").split()}
    model_words = {w.strip(" .,").lower() for w in model_part.split()}
    if label_words & model_words:
        return ChatResponse(text="T#Both refer to the same kind of object.")
    return ChatResponse(text="F#The two answers describe different object classes.")


def _caption_scores(fingerprint: str) -> ChatResponse:
    # Deterministic pseudo-random scores: stable per request, varying across
    # requests, which is what repeat-averaging tests need.
    rng = random.Random(fingerprint)
    scores = [rng.randint(0, 100) for _ in range(6)]
    inner = ",".join(str(s) for s in scores)
    return ChatResponse(
        text=("The model caption matches some aspects of the label.\n"
              f"Scores for each aspects: **[{inner}]**"))


RULES = {"demo": demo_rule}


def make_scripted_backend(rule: str = "demo", latency_s: float = 0.0,
                          embed_dim: int = 16) -> ScriptedBackend:
    if rule not in RULES:
        raise ValueError(f"unknown scripted rule {rule!r}; have {sorted(RULES)}")
    return ScriptedBackend(default_rule=RULES[rule],
                           embed_rule=hash_embed_rule(embed_dim),
                           latency_s=latency_s)
