import pytest

from urbannav.bench import generate_task, load_mapping_catalog
from urbannav.synthcity import CitySpec, generate_city


@pytest.fixture(scope="session")
def small_city():
    """10x10 grid, dense POIs: fast fixture for unit tests."""
    return generate_city(CitySpec(rows=10, cols=10, poi_density=0.5, seed=7))


@pytest.fixture(scope="session")
def city_graph(small_city):
    return small_city[0]


@pytest.fixture(scope="session")
def city_observations(small_city):
    return small_city[1]


@pytest.fixture(scope="session")
def mapping_catalog():
    return load_mapping_catalog()


@pytest.fixture(scope="session")
def sample_tasks(city_graph, mapping_catalog):
    """A handful of validated tasks on the small city."""
    tasks = []
    attempt = 0
    while len(tasks) < 10 and attempt < 500:
        mapping = mapping_catalog[attempt % len(mapping_catalog)]
        task = generate_task(city_graph, mapping, seed=attempt, city="testcity")
        attempt += 1
        if task is not None:
            tasks.append(task)
    assert len(tasks) == 10
    return tasks


@pytest.fixture(scope="session")
def sample_task(sample_tasks):
    return sample_tasks[0]
