import itertools
import json
import logging
import os
from dataclasses import dataclass, field, asdict, replace

import numpy as np
import pandas as pd

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Generation.Config import GenerationConfig
from ODgen.Generation.Generator import SampleContext
from ODgen.Generation.Worker import run_parallel
from ODgen.Transfer.Domains import DomainSpec, build_crops, distance_pairs
from ODgen.Transfer.Features import FeatureHistogram, pair_distances
from ODgen.Transfer.TinyNet import TinyNet, to_input
from ODgen.Transfer.Training import FreezeSchedule, TrainConfig, accuracy, train
from ODgen.utils import substream_seed

logger = logging.getLogger(__name__)

FEATURE_CUT = 5


def default_schedules(steps: int) -> tuple:
    return (FreezeSchedule('finetune', 0),
            FreezeSchedule('freeze-conv1', 2),
            FreezeSchedule('freeze-extractor', FEATURE_CUT),
            FreezeSchedule('unfreeze-at-{}'.format(steps // 2), FEATURE_CUT, steps // 2))


@dataclass(frozen=True)
class ExperimentConfig:
    generation: GenerationConfig
    crop_size: int = 64
    focal_length: float = 160.0
    train_crops: int = 2000
    test_crops: int = 500
    pair_count: int = 200
    histogram_bins: int = 20
    background_count: int = 64
    channels: tuple = (8, 16)
    data_seed: int = 0
    seeds: tuple = (0, 1, 2, 3, 4)
    stage1: TrainConfig = TrainConfig(steps=600)
    stage2: TrainConfig = TrainConfig(steps=400)
    schedules: tuple = None
    real_domain: DomainSpec = DomainSpec.real_proxy()
    synthetic_domain: DomainSpec = DomainSpec.plain_synthetic()
    output_dir: str = 'experiment'

    def __post_init__(self):
        for name in ('crop_size', 'train_crops', 'test_crops', 'pair_count', 'histogram_bins', 'background_count'):
            if getattr(self, name) < 1:
                raise InvalidParamError(name, getattr(self, name), ">= 1")
        if not self.focal_length > 0:
            raise InvalidParamError("focal_length", self.focal_length, "> 0")
        if not self.seeds:
            raise InvalidParamError("seeds", [], "at least one seed")
        object.__setattr__(self, 'seeds', tuple(self.seeds))
        object.__setattr__(self, 'channels', tuple(self.channels))
        if self.schedules is None:
            object.__setattr__(self, 'schedules', default_schedules(self.stage2.steps))
        object.__setattr__(self, 'schedules', tuple(self.schedules))
        names = [schedule.name for schedule in self.schedules]
        if len(set(names)) != len(names) or 'scratch' in names:
            raise InvalidParamError("schedules", names, "unique names other than 'scratch'")

    @property
    def classes(self) -> int:
        return len(self.generation.objects)

    def context(self, domain: DomainSpec, count: int, master_seed: int) -> SampleContext:
        return SampleContext.from_config(domain.generation_config(
            self.generation, self.crop_size, self.focal_length, count, master_seed, self.background_count))

    def to_dict(self) -> dict:
        echo = json.loads(json.dumps(asdict(self)))
        echo.pop('output_dir')
        echo['generation'].pop('output_dir')
        return echo


@dataclass
class TransferReport:
    runs: pd.DataFrame
    reference: pd.DataFrame
    histograms: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def summary(self) -> pd.DataFrame:
        """
        Mean and standard deviation of the accuracy per schedule, in schedule order.
        """
        order = list(dict.fromkeys(self.runs['schedule']))
        table = self.runs.groupby('schedule', sort=False)['accuracy'].agg(['mean', 'std', 'count'])
        table = table.reindex(order)
        reference = self.reference[['real', 'synthetic']].agg(['mean', 'std', 'count']).T
        return pd.concat([table, reference])

    def to_table(self) -> str:
        text = self.summary().to_string(float_format=lambda value: "{:.3f}".format(value))
        for name, histogram in self.histograms.items():
            text += "\nfeature distance {}: mean {:.4f}, median {:.4f}".format(name, histogram.mean,
                                                                             histogram.median)
        return text + "\n"

    def to_dict(self) -> dict:
        return {'runs': self.runs.to_dict(orient='records'),
                'reference': self.reference.to_dict(orient='records'),
                'histograms': {name: histogram.to_dict() for name, histogram in self.histograms.items()},
                'config': self.config}

    def save(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "report.json"), "w") as report_file:
            report_file.write(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(os.path.join(directory, "summary.txt"), "w") as summary_file:
            summary_file.write(self.to_table())


class TransferLab:
    def __init__(self, config: ExperimentConfig, jobs: int = 1):
        """
        Shared data and Stage-1 networks of one experiment.

        Stage 1 trains the whole network on the real-proxy domain, one network per seed.
        Stage 2 starts from a Stage-1 network with a fresh head and trains on another domain
        under a freeze schedule; accuracy is always measured on the real-proxy test split.

        :param config: ExperimentConfig
        :param jobs: worker threads for generation and independent runs
        """
        self.config = config
        self.jobs = jobs
        total = config.train_crops + config.test_crops
        self.real_ctx = config.context(config.real_domain, total, config.data_seed)
        logger.info("generating %d real-proxy crops", total)
        self.real_train = build_crops(self.real_ctx, range(config.train_crops), jobs)
        self.real_test = build_crops(self.real_ctx, range(config.train_crops, total), jobs)
        self.stage1 = None

    def net(self, seed: int) -> TinyNet:
        return TinyNet.default(self.config.classes, np.random.default_rng(substream_seed(seed, 0)),
                               self.config.crop_size, self.config.channels)

    def train_stage1(self) -> dict:
        """
        :return: {seed: (network, real-proxy holdout accuracy)}
        """
        images, labels = to_input(self.real_train.images), self.real_train.labels
        test_images = to_input(self.real_test.images)

        def task(k):
            seed = self.config.seeds[k]
            net = self.net(seed)
            stage = replace(self.config.stage1, seed=substream_seed(seed, 1))
            train(net, images, labels, FreezeSchedule('stage1', 0), stage)
            result = accuracy(net, test_images, self.real_test.labels)
            logger.info("stage 1 seed %d: holdout accuracy %.3f", seed, result)
            return net, result

        results = run_parallel(task, range(len(self.config.seeds)), self.jobs)
        self.stage1 = dict(zip(self.config.seeds, results))
        return self.stage1

    def synthetic_crops(self, domain: DomainSpec):
        ctx = self.config.context(domain, self.config.train_crops, self.config.data_seed + 1)
        logger.info("generating %d %s crops", self.config.train_crops, domain.name)
        return build_crops(ctx, range(self.config.train_crops), self.jobs)

    def train_stage2(self, crops, schedules: tuple, scratch: bool = False) -> list:
        """
        One run per (schedule, seed) on the given training crops.

        :param crops: CropDataset of the training domain
        :param schedules: FreezeSchedules
        :param scratch: also train a network from scratch per seed (schedule name 'scratch')
        :return: list of (schedule, seed, network, accuracy, final loss)
        """
        if self.stage1 is None:
            self.train_stage1()
        images, labels = to_input(crops.images), crops.labels
        test_images = to_input(self.real_test.images)
        runs = [(schedule, seed) for schedule in schedules for seed in self.config.seeds]
        if scratch:
            runs += [(FreezeSchedule('scratch', 0), seed) for seed in self.config.seeds]

        def task(k):
            schedule, seed = runs[k]
            if k >= len(schedules) * len(self.config.seeds):
                net = self.net(seed)
            else:
                net = self.stage1[seed][0].copy()
                net.reinitialize_head(np.random.default_rng(substream_seed(seed, 2)))
            stage = replace(self.config.stage2, seed=substream_seed(seed, 3))
            losses = train(net, images, labels, schedule, stage)
            result = accuracy(net, test_images, self.real_test.labels)
            logger.info("stage 2 %s seed %d: accuracy %.3f", schedule.name, seed, result)
            return schedule, seed, net, result, losses[-1] if losses else float('nan')

        return run_parallel(task, range(len(runs)), self.jobs)

    def distance_histograms(self, networks: dict) -> dict:
        """
        Feature-distance histograms of full-pipeline images against plain renders of the same
        object, pose and background, pooled over seeds, one per named network group.

        :param networks: {name: list of TinyNet}
        :return: {name: FeatureHistogram} sharing the same bin edges
        """
        start = self.config.train_crops + self.config.test_crops
        pairs = distance_pairs(self.real_ctx, range(start, start + self.config.pair_count), self.jobs)
        distances = {name: np.concatenate([pair_distances(pairs, net) for net in nets])
                     for name, nets in networks.items()}
        top = max(float(values.max()) for values in distances.values())
        bin_range = (0.0, top if top > 0 else 1.0)
        histograms = dict()
        for name, values in distances.items():
            counts, edges = np.histogram(values, bins=self.config.histogram_bins, range=bin_range)
            histograms[name] = FeatureHistogram(edges, counts, values)
        return histograms


def _runs_frame(results: list) -> pd.DataFrame:
    return pd.DataFrame([{'schedule': schedule.name, 'frozen_prefix_layers': schedule.frozen_prefix_layers,
                          'unfreeze_at_step': schedule.unfreeze_at_step, 'seed': seed, 'accuracy': result,
                          'final_loss': loss}
                         for schedule, seed, _, result, loss in results],
                        columns=['schedule', 'frozen_prefix_layers', 'unfreeze_at_step', 'seed', 'accuracy',
                                 'final_loss'])


def run_transfer_experiment(config: ExperimentConfig, jobs: int = 1, schedules: tuple = None,
                            histograms: bool = True) -> TransferReport:
    """
    Trains on the plain-synthetic domain under freeze schedules and measures accuracy on the
    real-proxy domain.

    Reported next to the schedules: the Stage-1 holdout accuracy ('real') and a network trained
    from scratch on the plain-synthetic domain ('synthetic'). With `histograms`, feature
    distances are computed with the fully frozen extractor and the fully finetuned one.

    :param config: ExperimentConfig
    :param jobs: worker threads
    :param schedules: schedules to run, defaults to config.schedules
    :param histograms: compute the feature-distance histograms
    :return: TransferReport
    """
    schedules = config.schedules if schedules is None else tuple(schedules)
    lab = TransferLab(config, jobs)
    lab.train_stage1()
    results = lab.train_stage2(lab.synthetic_crops(config.synthetic_domain), schedules, scratch=True)

    runs = _runs_frame([run for run in results if run[0].name != 'scratch'])
    scratch = {seed: result for schedule, seed, _, result, _ in results if schedule.name == 'scratch'}
    reference = pd.DataFrame([{'seed': seed, 'real': lab.stage1[seed][1], 'synthetic': scratch[seed]}
                              for seed in config.seeds], columns=['seed', 'real', 'synthetic'])

    report = TransferReport(runs, reference, config=config.to_dict())
    if histograms:
        groups = {'frozen': [], 'finetuned': []}
        for schedule, _, net, _, _ in results:
            if schedule.name == 'scratch' or schedule.unfreeze_at_step is not None:
                continue
            if schedule.frozen_prefix_layers >= FEATURE_CUT:
                groups['frozen'].append(net)
            elif schedule.frozen_prefix_layers == 0:
                groups['finetuned'].append(net)
        groups = {name: nets for name, nets in groups.items() if nets}
        if groups:
            report.histograms = lab.distance_histograms(groups)
    return report


def ablation_domains(config: ExperimentConfig) -> list:
    """
    Training domains over all combinations of blur, noise, light jitter and background mode.
    The 'on' settings are those of the real-proxy domain.
    """
    real = config.real_domain
    domains = []
    for blur, noise, jitter, background in itertools.product((True, False), (True, False), (True, False),
                                                             ('procedural', 'constant')):
        name = "blur={} noise={} jitter={} background={}".format(blur, noise, jitter, background)
        domains.append(DomainSpec(name, light_jitter=jitter,
                                  noise_sigma_range=real.noise_sigma_range if noise else (0.0, 0.0),
                                  blur_sigma_range=real.blur_sigma_range if blur else (0.0, 0.0),
                                  background_mode=background, channel_swap=real.channel_swap))
    return domains


def run_ablation(config: ExperimentConfig, jobs: int = 1) -> pd.DataFrame:
    """
    Frozen-extractor accuracy on the real-proxy test split for each pipeline toggle combination.

    :return: one row per combination with the mean and per-seed accuracies
    """
    lab = TransferLab(config, jobs)
    lab.train_stage1()
    frozen = (FreezeSchedule('freeze-extractor', FEATURE_CUT),)
    rows = []
    for domain in ablation_domains(config):
        results = lab.train_stage2(lab.synthetic_crops(domain), frozen)
        accuracies = [result for _, _, _, result, _ in results]
        rows.append({'blur': domain.blur_sigma_range != (0.0, 0.0),
                     'noise': domain.noise_sigma_range != (0.0, 0.0),
                     'light_jitter': domain.light_jitter, 'background': domain.background_mode,
                     'accuracy': float(np.mean(accuracies)), 'accuracies': accuracies})
    return pd.DataFrame(rows, columns=['blur', 'noise', 'light_jitter', 'background', 'accuracy', 'accuracies'])
