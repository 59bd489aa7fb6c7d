from urbannav.episode import PolicyState, StrategySlots, perspectives
from urbannav.prompts import render_choice_messages, render_stop_messages


def _state(graph, slots=None):
    persp = tuple(perspectives(graph, "n004_004", 0.0))
    return PolicyState(
        instruction="I am thirsty",
        node="n004_004",
        heading=0.0,
        step=2,
        phase="choice",
        panorama_text="streets everywhere",
        perspectives=persp,
        slots=slots or StrategySlots(),
    )


class TestStopPrompt:
    def test_single_user_message_with_panorama(self, city_graph):
        messages = render_stop_messages(_state(city_graph))
        assert len(messages) == 1
        assert messages[0]["role"] == "user"
        parts = messages[0]["content"]
        assert parts[0]["type"] == "text"
        assert "action -1 for stop" in parts[0]["text"]
        assert "I am thirsty" in parts[0]["text"]
        assert parts[-1]["text"] == "streets everywhere"

    def test_viewpoint_named(self, city_graph):
        messages = render_stop_messages(_state(city_graph))
        assert "viewpoint n004_004" in messages[0]["content"][0]["text"]


class TestChoicePrompt:
    def test_one_part_per_perspective(self, city_graph):
        state = _state(city_graph)
        messages = render_choice_messages(state)
        parts = messages[0]["content"]
        assert len(parts) == 1 + len(state.perspectives)
        assert parts[1]["text"].startswith("Perspective A (FORWARD):")

    def test_perspective_count_stated(self, city_graph):
        state = _state(city_graph)
        text = render_choice_messages(state)[0]["content"][0]["text"]
        assert f"There are {len(state.perspectives)} candidate perspectives" in text
        assert '"score": 0.78' in text  # worked example retained verbatim

    def test_backtrack_hint_letter(self, city_graph):
        state = _state(city_graph, StrategySlots(backtrack_hint=2))
        text = render_choice_messages(state)[0]["content"][0]["text"]
        assert "please choose image index C" in text

    def test_cognition_text_joins_query(self, city_graph):
        state = _state(city_graph, StrategySlots(cognition_text="### Node: n000_000"))
        text = render_choice_messages(state)[0]["content"][0]["text"]
        assert "### Node: n000_000" in text

    def test_empty_slots_render_placeholders(self, city_graph):
        text = render_choice_messages(_state(city_graph))[0]["content"][0]["text"]
        assert "Historical context from previous rounds: (none)" in text
        assert "Visit trajectory so far: (none)" in text

    def test_history_and_surrounding_slots(self, city_graph):
        slots = StrategySlots()
        slots.surrounding_text = "Local memory within 50 m"
        slots.history_text = "- step 1: at n004_003"
        text = render_choice_messages(_state(city_graph, slots))[0]["content"][0]["text"]
        assert "Local memory within 50 m" in text
        assert "- step 1: at n004_003" in text
