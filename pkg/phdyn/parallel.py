"""Order-preserving fan-out of per-point work over Ray workers."""

from typing import Any, Callable, Sequence
import logging
import time

import numpy as np
from tqdm import tqdm

from phdyn.torus import DynSystem

logger = logging.getLogger(__name__)

TQDM_BAR_FORMAT = '{l_bar}{bar:10}{r_bar}{bar:-10b}'


def chunked(points: np.ndarray, chunk_size: int) -> list[np.ndarray]:
    """Splits a batch into consecutive chunks of a fixed size (the last one may be shorter)."""
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    return [points[i:i + chunk_size] for i in range(0, len(points), chunk_size)]


def _run_remote(task: Callable, spec: dict, chunk: Any) -> Any:
    # Perform the import here so workers only pay for it when they rebuild a system
    from phdyn.config import build_system
    return task(build_system(spec), chunk)


def fan_out(task: Callable[[DynSystem, Any], Any], system: DynSystem, chunks: Sequence[Any], workers: int = 1,
            tqdm_desc: str | None = None) -> list:
    """
    Applies `task(system, chunk)` to every chunk and returns the results in chunk order.

    Args:
        task: A module-level function, so it can be shipped to Ray workers.
        system: The system; it travels to workers as its config spec and is rebuilt there.
        chunks: The work items.
        workers: Number of worker processes; 1 or less runs everything in this process.
        tqdm_desc: Description of the progress bar. If None, no progress bar is shown.

    Returns:
        The list of per-chunk results, in the order of `chunks` whatever the worker count.
    """
    if workers > 1 and system.spec is None:
        logger.warning(f"System {system.name} has no config spec to rebuild from; running inline")
        workers = 1
    if workers <= 1:
        results = []
        with tqdm(total=len(chunks), desc=tqdm_desc, unit="chunk", bar_format=TQDM_BAR_FORMAT, disable=tqdm_desc is None) as progress_bar:
            for chunk in chunks:
                start_time = time.time()
                results.append(task(system, chunk))
                progress_bar.set_postfix_str(f"Chunk time = {time.time() - start_time:.2f}s")
                progress_bar.update(1)
        return results

    import ray
    if not ray.is_initialized():
        ray.init(num_cpus=workers, include_dashboard=False, log_to_driver=False)
    elif (cpus := ray.cluster_resources().get('CPU')) != workers:
        logger.warning(f"Ray is already running with {cpus} CPUs; ignoring workers = {workers}")
    logger.info(f"Fanning {len(chunks)} chunks of {getattr(task, 'func', task).__name__} out over {workers} Ray workers")
    remote = ray.remote(_run_remote)
    futures = [remote.remote(task, system.spec, chunk) for chunk in chunks]
    results = []
    with tqdm(total=len(futures), desc=tqdm_desc, unit="chunk", bar_format=TQDM_BAR_FORMAT, disable=tqdm_desc is None) as progress_bar:
        for future in futures:
            results.append(ray.get(future))
            progress_bar.update(1)
    return results
