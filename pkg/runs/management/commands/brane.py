from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from geometry.exceptions import BraneError
from runs.forms import TASKS, check_grid_scale, parse_config
from runs.services import RunService

# Exit codes: 2 for a bad config, 3 for a numerical failure
CONFIG_ERROR = 2
NUMERICAL_ERROR = 3


class Command(BaseCommand):
    help = 'Run one brane task from a JSON config and write report.json plus CSV artefacts'

    def add_arguments(self, parser):
        parser.add_argument('task', choices=TASKS)
        parser.add_argument('--config', required=True, help='path to the JSON run config')
        parser.add_argument('--out', required=True, help='output directory (created if missing)')
        parser.add_argument('--grid-scale', type=float, default=1.0,
                            help='multiply every node count by this factor')

    def handle(self, *args, **options):
        task = options['task']
        path = Path(options['config'])
        if options['grid_scale'] <= 0:
            raise CommandError('--grid-scale must be > 0', returncode=CONFIG_ERROR)

        try:
            config = parse_config(path.read_text(encoding='utf-8'))
        except OSError as exc:
            raise CommandError(f'cannot read {path}: {exc}', returncode=CONFIG_ERROR)
        except ValidationError as exc:
            raise CommandError('invalid config:\n  ' + '\n  '.join(exc.messages), returncode=CONFIG_ERROR)

        if config.task != task:
            raise CommandError(
                f"task: config is for '{config.task}' but '{task}' was requested",
                returncode=CONFIG_ERROR,
            )

        try:
            check_grid_scale(config, options['grid_scale'])
        except ValidationError as exc:
            raise CommandError('invalid grid scale:\n  ' + '\n  '.join(exc.messages), returncode=CONFIG_ERROR)

        self.stdout.write(self.style.MIGRATE_HEADING(f'{task}: {path.name}'))
        service = RunService(config, options['out'], options['grid_scale'])
        try:
            report = service.run()
        except BraneError as exc:
            raise CommandError(f'{task} failed: {exc}', returncode=NUMERICAL_ERROR)
        except OSError as exc:
            raise CommandError(f'{task}: cannot read or write a file: {exc}', returncode=CONFIG_ERROR)

        for name in report['files']:
            self.stdout.write(f'  > {name}')
        self.stdout.write(self.style.SUCCESS(f"Report written to {Path(options['out']) / 'report.json'}"))
