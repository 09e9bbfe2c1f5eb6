from django.core.management.base import BaseCommand, CommandError

from solver.exceptions import SinnError
from solver.experiments import MODES, load_run_config, run
from solver.problems import BUILTIN_CASES


class Command(BaseCommand):
    help = "Run a solver experiment: verify, solve, pinn, compare, march or inverse."

    def add_arguments(self, parser):
        parser.add_argument("mode", choices=sorted(MODES))
        parser.add_argument("--config", help="YAML run configuration")
        parser.add_argument("--case", choices=sorted(BUILTIN_CASES))
        parser.add_argument("--seed", type=int)
        parser.add_argument("--seeds", type=int, help="Number of consecutive seeds, starting at --seed")
        parser.add_argument("--iterations", type=int)
        parser.add_argument("--activations", help="Comma-separated activation names, or 'all'")
        parser.add_argument("--out", dest="output_dir", help="Output directory")
        parser.add_argument("--gate", action="store_true", default=None, help="Fail when a tolerance is not met")

    def handle(self, *args, **options):
        activations = options["activations"]
        if activations and activations != "all":
            activations = [name.strip() for name in activations.split(",") if name.strip()]
        overrides = {
            "case": options["case"],
            "seed": options["seed"],
            "seeds": options["seeds"],
            "iterations": options["iterations"],
            "activations": activations,
            "output_dir": options["output_dir"],
            "gate": options["gate"],
        }
        try:
            config = load_run_config(options["config"], options["mode"], overrides)
            outcome = run(config)
        except SinnError as exc:
            raise CommandError(str(exc)) from exc

        for message in outcome.failures:
            self.stderr.write(f"  {message}")
        if outcome.status != "Passed":
            raise CommandError(f"{config.mode} {config.case}: {outcome.status} ({len(outcome.failures)} problem(s))")
        self.stdout.write(self.style.SUCCESS(f"{config.mode} {config.case}: Passed -> {outcome.output_dir}"))
