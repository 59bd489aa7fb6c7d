"""Prompt templates for the remote-model adapter.

Both phases require a JSON reply; unparseable replies fall back to action 0
downstream. Strategy slots ({backtrack}, {surrounding}, {history}) render
empty when unused so the template shape is stable.
"""

from __future__ import annotations

import string

from .episode import PolicyState

STOP_FORMAT_INSTRUCTIONS = (
    'Reply with a single JSON object: {"overall observation": <string>, '
    '"thoughts": <string>, "action": <0 or -1>, "score": <number in [0, 1]>}'
)

CHOICE_FORMAT_INSTRUCTIONS = (
    'Reply with a single JSON object: {"perspective observation": {<letter>: <string>, ...}, '
    '"thoughts": <string>, "action": <letter>, "score": <number in [0, 1]>}'
)

STOP_TEMPLATE = """#Instruction:
You are a helpful robot that analyses images according to question and helps them find the way to reach their destination.
Given the question, state whether the scene content satisfies the user's requirement.

#Output Format:
{format_instructions}

#Example:

##Input:
[
  {{"type": "text", "text": "I am hungry"}},
  {{"type": "image_url", "image_url": "..."}}
]

##Output:
{{
  "overall observation": "There are residential buildings, a bookstore, and a bus station.",
  "thoughts": "I am hungry, so I should find a restaurant. No restaurant here, keep going.",
  "action": 0
}}

If you think you have already arrived at the destination, output action -1 for stop; otherwise 0.

#Now it's your turn.

##Input:

{query}

You are now at viewpoint {viewpoint}.

{backtrack_prompt}
"""

CHOICE_TEMPLATE = """#Instruction:
You are a helpful robot that analyses multiple candidate images and selects the one that best answers the user's question.
Return its index (A, B, C ...) together with a confidence score in [0, 1].

#Output Format:
{format_instructions}

#Example:

##Input:
[
  {{"type": "text", "text": "I am hungry"}},
  {{"type": "image_url", "image_url": "..."}},
  {{"type": "image_url", "image_url": "..."}}
]

##Output:
{{
  "perspective observation": {{
    "A": "A narrow side street with no shops or amenities nearby.",
    "B": "A broad avenue lined with numerous office buildings, suggesting a higher chance of restaurants and other services."
  }},
  "thoughts": "I'm hungry and need the route most likely to lead to food. Therefore, I should head toward B.",
  "action": "B",
  "score": 0.78
}}

{perspective_prompt}. Make sure the number of observations equals the number of perspectives provided.
{direction_prompt}. Prioritise the FORWARD, LEFT, and RIGHT directions; move BACK only if no better option exists.

{backtrack_prompt}

Historical context from previous rounds: {surrounding_prompt}.

Visit trajectory so far: {history_prompt}.

{query}

You are now at viewpoint {viewpoint}.
"""


def _letters(n: int) -> list[str]:
    return list(string.ascii_uppercase[:n])


def _query(state: PolicyState) -> str:
    q = state.instruction
    if state.slots.cognition_text:
        q = f"{q}\n\nSpatial context from earlier attempts:\n{state.slots.cognition_text}"
    return q


def render_stop_messages(state: PolicyState) -> list[dict]:
    """Chat-format message list for the stop phase."""
    text = STOP_TEMPLATE.format(
        format_instructions=STOP_FORMAT_INSTRUCTIONS,
        query=_query(state),
        viewpoint=state.node,
        backtrack_prompt=state.slots.backtrack_text,
    )
    parts: list[dict] = [{"type": "text", "text": text}]
    parts.append({"type": "text", "text": state.panorama_text})
    return [{"role": "user", "content": parts}]


def render_choice_messages(state: PolicyState) -> list[dict]:
    """Chat-format message list for the choice phase; one part per perspective."""
    n = len(state.perspectives)
    letters = _letters(n)
    labels = ", ".join(
        f"{letters[p.index]}: {p.label} (heading {p.heading:.1f} deg)" for p in state.perspectives
    )
    perspective_prompt = f"There are {n} candidate perspectives, indexed {', '.join(letters)}"
    direction_prompt = (
        f"You are currently facing {state.heading:.1f} degrees; the perspectives are {labels}"
    )
    backtrack_text = state.slots.backtrack_text
    if state.slots.backtrack_hint is not None:
        hint_letter = letters[state.slots.backtrack_hint] if state.slots.backtrack_hint < n else "?"
        backtrack_text = f"You have just backtracked, please choose image index {hint_letter}."
    text = CHOICE_TEMPLATE.format(
        format_instructions=CHOICE_FORMAT_INSTRUCTIONS,
        perspective_prompt=perspective_prompt,
        direction_prompt=direction_prompt,
        backtrack_prompt=backtrack_text,
        surrounding_prompt=state.slots.surrounding_text or "(none)",
        history_prompt=state.slots.history_text or "(none)",
        query=_query(state),
        viewpoint=state.node,
    )
    parts: list[dict] = [{"type": "text", "text": text}]
    for p in state.perspectives:
        parts.append(
            {"type": "text", "text": f"Perspective {letters[p.index]} ({p.label}): {p.text}"}
        )
    return [{"role": "user", "content": parts}]
