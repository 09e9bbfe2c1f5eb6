import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_code', models.CharField(blank=True, editable=False, help_text='Auto-generated run identifier', max_length=30, unique=True)),
                ('mode', models.CharField(choices=[('verify', 'Verify'), ('solve', 'Solve'), ('pinn', 'PINN baseline'), ('compare', 'Compare'), ('march', 'March'), ('inverse', 'Inverse')], max_length=20)),
                ('case_name', models.CharField(blank=True, max_length=100)),
                ('seed', models.IntegerField(default=0)),
                ('config_hash', models.CharField(max_length=64)),
                ('output_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('Running', 'Running'), ('Passed', 'Passed'), ('Failed', 'Failed'), ('Aborted', 'Aborted')], default='Running', max_length=20)),
                ('wall_clock', models.FloatField(blank=True, help_text='Seconds', null=True)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='RunMetric',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(max_length=50)),
                ('step', models.PositiveIntegerField(default=0)),
                ('time', models.FloatField()),
                ('u_error', models.FloatField(blank=True, null=True)),
                ('ux_error', models.FloatField(blank=True, null=True)),
                ('uy_error', models.FloatField(blank=True, null=True)),
                ('uz_error', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='metrics', to='solver.experimentrun')),
            ],
            options={
                'ordering': ['step', 'time'],
            },
        ),
    ]
